"""Built-in benchmark scenes as plain dictionaries.

Every factory returns a scene mapping that ``scene_from_dict`` accepts;
keyword arguments override the resolution or end time so the same setup can
be run at desk scale or in a convergence study.
"""
from __future__ import annotations

import math

from .config import SceneConfig, scene_from_dict

AP_TISSUE = dict(k=8.0, a=0.15, b=0.15, eps0=0.002, mu1=0.2, mu2=0.3)
AP_HEART = dict(AP_TISSUE, a=0.01)
FHN = dict(a=0.1, eps0=0.01, beta=0.5, gamma=1.0, sigma=0.0)
MYOCARDIUM = dict(a=0.059, b=8.023, a_f=18.472, b_f=16.026, a_s=2.841, b_s=11.12, a_fs=0.216, b_fs=11.436)

SPIRAL_TENSORS = {
    "D1": [[1e-4, 0.0], [0.0, 1e-4]],
    "D2": [[1e-4, 0.0], [0.0, 2.5e-5]],
    "D3": [[1e-4, 0.0], [0.0, 1e-5]],
}
ANISO_TENSORS = {"D1": [[0.09, 0.0], [0.0, 0.03]], "D2": [[0.1, 0.0], [0.0, 0.01]]}

# heart probes in mm; the apex probe sits mid-wall at the LV apex
HEART_PROBES = {"A": [0.0, -30.0, 26.0], "apex": [0.0, -57.0, 0.0], "C": [-30.0, -50.0, 0.0]}
SEPTUM_S1 = "(x > -53) & (x < -43) & (y > -12) & (abs(z) < 12)"
S2_PRISM = "(x >= 0) & (x <= 6) & (y >= -6) & (y <= 0) & (z > 0)"


def _diffusion_1d(name, dp, initial, oracle, end, nan_every=100):
    return {
        "name": name,
        "geometry": {"kind": "block", "lo": [0.0, 0.0], "hi": [0.4, 1.0], "dp": dp, "periodic": [True, False]},
        "electro": {"model": "none", "d_iso": 1e-4, "initial": {"V": initial}},
        "oracle": {"case": oracle, "axis": 1},
        "probes": [{"name": "mid", "location": [0.2, 0.5], "quantity": "V"}],
        "time": {"end": end},
        "output": {"nan_check_every": nan_every},
    }


def band(dp=0.01, end=1.0):
    """Uniform band between z = 0.45 and 0.55 spreading by diffusion.

    Each particle starts with the fraction of its cell covered by the band, so
    the discrete band carries the exact mass at every resolution.
    """
    h = 0.5 * dp
    cover = f"clip((minimum(y + {h!r}, 0.55) - maximum(y - {h!r}, 0.45)) / {dp!r}, 0, 1)"
    return _diffusion_1d("band", dp, cover, "band", end)


def exp_profile(dp=0.01, end=1.0):
    """Gaussian profile that started as a point source one time unit earlier."""
    return _diffusion_1d("exp", dp, "exp(-(y - 0.5)**2 / (4e-4))", "exp", end)


def aniso_gaussian(tensor="D1", n=100, start=120.0, end=1920.0):
    D = ANISO_TENSORS[tensor]
    dxx, dyy = D[0][0], D[1][1]
    init = (f"exp(-((x - 100)**2 / (4*{start}*{dxx}) + (y - 100)**2 / (4*{start}*{dyy})))"
            f" / (4*pi*{start}*sqrt({dxx * dyy!r}))")
    return {
        "name": f"aniso_{tensor}",
        "geometry": {"kind": "block", "lo": [0.0, 0.0], "hi": [200.0, 200.0], "dp": 200.0 / n},
        "electro": {"model": "none", "tensor": D, "compensation": "stencil", "correction": True,
                    "initial": {"V": init}},
        "oracle": {"case": "aniso_gaussian", "params": {"D": D}},
        "probes": [{"name": "centre", "location": [101.0, 101.0], "quantity": "V"}],
        "time": {"start": start, "end": end},
    }


def pulse(dp=0.02, end=16.0):
    """Free pulse from a Gaussian bump at the (1, 0) corner of the unit square."""
    return {
        "name": "pulse",
        "geometry": {"kind": "block", "lo": [0.0, 0.0], "hi": [1.0, 1.0], "dp": dp},
        "electro": {"model": "aliev_panfilov", "params": AP_TISSUE, "d_iso": 1.0,
                    "initial": {"V": "exp(-((x - 1)**2 + y**2) / 0.25)", "w": 0.0}},
        "probes": [{"name": "P", "location": [0.3, 0.7], "quantity": "V", "interval": 0.01}],
        "time": {"end": end},
    }


def spiral(tensor="D1", dp=0.0125, end=1000.0, circle=False):
    """FitzHugh-Nagumo spiral from the quadrant (or circle) initialization.

    The gate starts at 0.1 over the upper half of the domain, as in the
    circular variant; the lower-right quadrant stays excitable so the broken
    front can curl. ``dp`` must resolve the front (width ~ sqrt(2 d)) in
    the slow direction: at 0.025 the D3 front fails to propagate in y.
    """
    if circle:
        R = 1.25
        sx = f"sqrt(maximum({R}**2 - ({R} - y)**2, 0))"
        sy = f"sqrt(maximum({R}**2 - ({R} - x)**2, 0))"
        V0 = f"where(({R} - {sx} < x) & (x <= {R}) & ({R} - {sy} < y) & (y <= {R}), 1.0, 0.0)"
        w0 = f"where(({R} - {sx} < x) & (x < {R} + {sx}) & ({R} <= y) & (y < {R} + {sy}), 0.1, 0.0)"
        geometry = {"kind": "analytic", "shape": "disk", "params": {"radius": R, "center": [R, R]},
                    "dp": dp, "relax_steps": 0}
    else:
        V0 = "where((x > 0) & (x <= 1.25) & (y > 0) & (y < 1.25), 1.0, 0.0)"
        w0 = "where((y >= 1.25) & (y < 2.5), 0.1, 0.0)"
        geometry = {"kind": "block", "lo": [0.0, 0.0], "hi": [2.5, 2.5], "dp": dp}
    return {
        "name": f"spiral_{'circle_' if circle else ''}{tensor}",
        "geometry": geometry,
        "electro": {"model": "fitzhugh_nagumo", "params": FHN, "tensor": SPIRAL_TENSORS[tensor],
                    "compensation": "stencil" if not circle else "continuum", "initial": {"V": V0, "w": w0}},
        "probes": [{"name": "centre", "location": [1.25, 1.25], "quantity": "V", "interval": 1.0},
                   {"name": "centre_w", "location": [1.25, 1.25], "quantity": "w", "interval": 1.0}],
        "time": {"end": end},
    }


def cantilever(material="neo_hookean", fiber_ratio=0.0, n=6, end=2.1):
    """Column 1 x 1 x 6 clamped below z = 0, kicked with a uniform velocity.

    The clamp is a holder of fixed particles below the base so the support
    acts through full kernel neighborhoods.
    """
    dp = 1.0 / n
    holder = math.ceil(2 * 1.3) * dp
    if material == "neo_hookean":
        mat = {"model": "neo_hookean", "preset": "cantilever"}
        name = "cantilever_nh"
    else:
        mat = {"model": "holzapfel_ogden", "preset": "cantilever", "params": {"fiber_ratio": fiber_ratio}}
        name = f"cantilever_ho{fiber_ratio:g}"
    return {
        "name": name,
        "geometry": {"kind": "block", "lo": [0.0, 0.0, -holder], "hi": [1.0, 1.0, 6.0], "dp": dp, "rho0": 1100.0},
        "mechanics": {"material": mat, "fiber": [1.0, 0.0, 0.0], "sheet": [0.0, 1.0, 0.0],
                      "constraints": ["z < 0"], "initial_velocity": [5 * math.sqrt(3), 5.0, 0.0],
                      "tangent_cfl": False},
        "probes": [{"name": "S", "location": [0.5, 0.5, 6.0 - 0.5 * dp], "quantity": "displacement"}],
        "time": {"end": end},
    }


def active_cube(isotropic=True, n=12, end=8.0, lambda_bulk=450.0):
    """Unit cube contracting under ``Ta = -0.5 V`` with ``V`` linear in height.

    The tension is ramped over the first time unit; fibers run along the
    potential gradient (vertical) and the base sits on a clamped holder.
    """
    dp = 1.0 / n
    holder = math.ceil(2 * 1.3) * dp
    return {
        "name": f"cube_{'iso' if isotropic else 'aniso'}",
        "geometry": {"kind": "block", "lo": [0.0, 0.0, -holder], "hi": [1.0, 1.0, 1.0], "dp": dp},
        "electro": {"enabled": False, "model": "none", "initial": {"V": "30 * clip(z, 0, 1)"}},
        "mechanics": {"material": {"model": "holzapfel_ogden",
                                   "preset": "myocardium_isotropic" if isotropic else "myocardium",
                                   "params": {"lambda_bulk": lambda_bulk}},
                      "fiber": [0.0, 0.0, 1.0], "sheet": [1.0, 0.0, 0.0], "constraints": ["z < 0"],
                      "damping": 2.0, "viscosity": 1.0},
        "coupling": {"active_stress": {"mode": "linear", "factor": -0.5, "ramp": 1.0}},
        "probes": [{"name": "top", "location": [0.5, 0.5, 1.0 - 0.5 * dp], "quantity": "displacement",
                    "interval": 0.1}],
        "time": {"end": end},
    }


def heart(dp=2.0, end=300.0, relax_steps=200, jitter=0.3, s2=False, mechanics=False):
    """Free pulse in the generic biventricle from an S1 clamp at the upper septum."""
    stimuli = [{"label": "S1", "region": SEPTUM_S1, "t_on": 0.0, "t_off": 0.5, "value": 0.92}]
    if s2:
        stimuli.append({"label": "S2", "region": S2_PRISM, "t_on": 105.0, "t_off": 105.2, "value": 0.95})
    scene = {
        "name": "heart",
        "geometry": {"kind": "biventricle", "dp": dp, "relax_steps": relax_steps, "jitter": jitter},
        "electro": {"model": "aliev_panfilov", "params": AP_HEART, "d_iso": 1.0, "d_ani": 0.1,
                    "fiber": "rule_based", "compensation": "continuum"},
        "stimuli": stimuli,
        "probes": [{"name": k, "location": v, "quantity": "V", "interval": 0.5} for k, v in HEART_PROBES.items()],
        "time": {"end": end},
    }
    if mechanics:
        scene["mechanics"] = {"material": {"model": "holzapfel_ogden", "preset": "myocardium",
                                           "params": {"lambda_bulk": 10.0}},
                              "fiber": "rule_based", "constraints": ["y > -4"], "damping": 1.0, "viscosity": 0.1}
        scene["coupling"] = {"active_stress": {"mode": "constant", "value": 0.15, "params": {"threshold": 0.5}}}
    return scene


BUILTIN = {
    "band": band,
    "exp": exp_profile,
    "aniso_D1": lambda **kw: aniso_gaussian("D1", **kw),
    "aniso_D2": lambda **kw: aniso_gaussian("D2", **kw),
    "pulse": pulse,
    "spiral_D1": lambda **kw: spiral("D1", **kw),
    "spiral_D2": lambda **kw: spiral("D2", **kw),
    "spiral_D3": lambda **kw: spiral("D3", **kw),
    "spiral_circle_D1": lambda **kw: spiral("D1", circle=True, **kw),
    "spiral_circle_D2": lambda **kw: spiral("D2", circle=True, **kw),
    "cantilever_nh": cantilever,
    "cantilever_ho": lambda **kw: cantilever("holzapfel_ogden", **kw),
    "cube_iso": active_cube,
    "cube_aniso": lambda **kw: active_cube(False, **kw),
    "heart": heart,
}


def builtin_scene(name: str, **overrides) -> SceneConfig:
    if name not in BUILTIN:
        raise KeyError(f"unknown built-in scene {name!r}; choose from {sorted(BUILTIN)}")
    return scene_from_dict(BUILTIN[name](**overrides))
