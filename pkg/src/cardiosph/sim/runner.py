"""Scene assembly and the split electromechanical time loop.

Each step of length ``dt``:

1. reaction half step (potential, then gating variable),
2. one explicit diffusion step,
3. reaction half step (gating variable, then potential),
4. with coupling: active-tension update, stress assembly and one
   position-based Verlet step of the solid.

Without mechanics ``dt = dt_p``, the diffusive limit capped by the operator's
Gershgorin bound; with mechanics ``dt = min(dt_p, dt_m)``.  The last step is
shortened to land on ``time.end``.
"""
from __future__ import annotations

import dataclasses
import logging
import os
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .. import solid as S
from ..diffusion import ConductivityModel, DiffusionOperator, assemble_conductivity, diffusion_timestep
from ..errors import ConfigError, NumericalFailure
from ..geometry import (BiventricleSpec, LevelSetGrid, annulus_sdf, box_sdf, build_heart, ellipsoid_sdf,
                        generate_lattice_particles, grid_for_mesh, jitter_particles, parse_stl,
                        relax_particles, sphere_sdf)
from ..kernels import SmoothingKernel
from ..particles import ParticleSet, build_neighbor_lists, compute_correction_matrices
from ..reaction import ActiveStressParams, ElectroState, active_stress_step, make_model, reaction_half_step
from . import oracles
from .config import SceneConfig
from .expr import compile_expression
from .output import write_probe_csv, write_snapshot_csv, write_vtk_points
from .protocols import Probe, ProbeRecorder, StimulusProtocol, apply_stimulus

log = logging.getLogger(__name__)


# ------------------------------------------------------------------ geometry

@dataclass
class Geometry:
    pset: ParticleSet
    kernel: SmoothingKernel
    box: np.ndarray | None = None
    levelset: LevelSetGrid | None = None
    fibers: object = None  # FiberField of rule-based geometries
    heart: object = None


def _analytic_phi(shape: str, params: dict):
    """Level-set function (positive inside) and bounding box of a shape."""
    p = dict(params)
    if shape in ("disk", "sphere"):
        r = float(p["radius"])
        c = np.asarray(p.get("center", [0.0] * (2 if shape == "disk" else 3)), dtype=float)
        return (lambda x: -sphere_sdf(x, r, c)), c - r, c + r
    if shape == "ellipsoid":
        ax = np.asarray(p["axes"], dtype=float)
        c = np.asarray(p.get("center", [0.0] * len(ax)), dtype=float)
        return (lambda x: -ellipsoid_sdf(x, ax, c)), c - ax, c + ax
    if shape == "annulus":
        ri, ro = float(p["r_in"]), float(p["r_out"])
        c = np.asarray(p.get("center", [0.0, 0.0]), dtype=float)
        return (lambda x: -annulus_sdf(x, ri, ro, c)), c - ro, c + ro
    if shape == "box":
        lo, hi = np.asarray(p["lo"], dtype=float), np.asarray(p["hi"], dtype=float)
        return (lambda x: -box_sdf(x, lo, hi)), lo, hi
    raise ConfigError([("geometry.shape", f"unknown shape {shape!r}")])


def build_geometry(scene: SceneConfig) -> Geometry:
    g = scene.geometry
    dim = scene.dim
    k = SmoothingKernel.from_spacing(g.dp, dim, scene.kernel.h_over_dp)
    try:
        if g.kind == "block":
            pset = ParticleSet.lattice(g.lo, g.hi, g.dp, rho0=g.rho0)
            box = None
            if g.periodic and any(g.periodic):
                box = np.where(np.asarray(g.periodic), np.asarray(g.hi) - np.asarray(g.lo), 0.0)
            if g.jitter > 0:
                pset = jitter_particles(pset, g.jitter * g.dp, scene.seed)
                if box is not None:
                    per = box > 0
                    lo = np.asarray(g.lo, dtype=float)
                    pset.r0[:, per] = lo[per] + np.mod(pset.r0[:, per] - lo[per], box[per])
            if box is not None and g.relax_steps > 0:
                pset = relax_particles(pset, None, k, steps=g.relax_steps, box=box)
            return Geometry(pset, k, box)
        if g.kind == "biventricle":
            spec = BiventricleSpec(**{key: tuple(v) if isinstance(v, list) else v for key, v in g.params.items()})
            heart = build_heart(spec, dp=g.dp, grid_spacing=g.grid_spacing, relax_steps=g.relax_steps,
                                rho0=g.rho0, jitter=g.jitter, seed=scene.seed)
            return Geometry(heart.particles, k, None, heart.levelset, heart.fibers, heart)
        if g.kind == "analytic":
            func, lo, hi = _analytic_phi(g.shape, g.params)
            ls = LevelSetGrid.from_function(func, lo, hi, g.grid_spacing or 0.5 * g.dp)
        else:
            with open(g.path, "rb") as fh:
                mesh = parse_stl(fh.read())
            ls = grid_for_mesh(mesh, g.grid_spacing or 0.5 * g.dp)
    except (KeyError, TypeError) as exc:
        raise ConfigError([("geometry.params", f"missing or invalid parameter: {exc}")]) from None
    pset = generate_lattice_particles(ls, g.dp, g.rho0)
    if g.jitter > 0:
        pset = jitter_particles(pset, g.jitter * g.dp, scene.seed, ls, 0.5 * g.dp)
    if g.relax_steps > 0:
        pset = relax_particles(pset, ls, k, steps=g.relax_steps)
    return Geometry(pset, k, None, ls)


# ------------------------------------------------------------------ physics

def build_material(cfg):
    prm = dict(cfg.params or {})
    if cfg.model == "neo_hookean":
        if cfg.preset == "cantilever":
            base = S.NeoHookeanParams.from_young(1.7e7, 0.45)
        elif "E" in prm or "nu" in prm:
            base = S.NeoHookeanParams.from_young(prm.pop("E"), prm.pop("nu"))
        else:
            base = S.NeoHookeanParams(lam=prm.pop("lam"), mu=prm.pop("mu"))
        return dataclasses.replace(base, **prm) if prm else base
    if cfg.preset == "cantilever":
        base = S.HolzapfelOgdenParams.cantilever(prm.pop("fiber_ratio", 0.0), prm.pop("lambda_bulk", None))
    elif cfg.preset in ("myocardium", "myocardium_isotropic"):
        base = S.HolzapfelOgdenParams.myocardium(cfg.preset == "myocardium_isotropic", prm.pop("lambda_bulk", 1.0))
    else:
        base = S.HolzapfelOgdenParams(**prm)
        prm = {}
    return dataclasses.replace(base, **prm) if prm else base


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _fiber_frame(fiber, sheet, geo: Geometry, dim: int, where: str):
    n = geo.pset.count
    if fiber is None:
        return None
    if fiber == "rule_based":
        if geo.fibers is None:
            raise ConfigError([(where, "rule-based fibers need a biventricle geometry")])
        return S.FiberFrame(geo.fibers.f0, geo.fibers.s0)
    f = _unit(fiber)
    if sheet is None:
        # any unit vector orthogonal to the fiber
        trial = np.eye(dim)[int(np.argmin(np.abs(f)))]
        s = _unit(trial - f * (trial @ f))
    else:
        s = _unit(sheet)
    return S.FiberFrame.uniform(f, s, n)


@dataclass
class RunResult:
    header: list
    probes: np.ndarray
    summary: dict
    dt_log: np.ndarray
    electro: ElectroState | None
    mech: S.MechState | None
    simulation: "Simulation" = field(repr=False, default=None)


class Simulation:
    """All operators of one scene plus its evolving state."""

    def __init__(self, scene: SceneConfig, geometry: Geometry | None = None):
        self.scene = scene
        self.geo = geometry or build_geometry(scene)
        pset, k = self.geo.pset, self.geo.kernel
        self.pset, self.kernel, self.dim = pset, k, pset.dim
        self.nl = build_neighbor_lists(pset, k) if self.geo.box is None else _periodic_neighbors(pset, k, self.geo.box)
        self.B0 = compute_correction_matrices(pset, self.nl)
        self.t = scene.time.start
        self.step_count = 0
        self._build_electro()
        self._build_mechanics()
        self._build_coupling()
        self.stimuli = [StimulusProtocol(s.region, s.t_on, s.t_off, s.value, s.label, s.mode)
                        for s in scene.stimuli]
        self.probes = [Probe(p.name, p.location, p.quantity, p.interval) for p in scene.probes]
        for p in self.probes:
            p.resolve(pset.r0, k.h)

    # -- assembly
    def _build_electro(self):
        sc, n = self.scene, self.pset.count
        e = sc.electro
        self.electro = None
        self.diffusion = None
        self.ionic = None
        self.dt_p = np.inf
        if e is None:
            return
        init = e.initial or {}
        vals = {}
        for key in ("V", "w", "Ta"):
            text = init.get(key, 0.0)
            vals[key] = compile_expression(str(text), ("x", "y", "z")).on_points(self.pset.r0)
        self.electro = ElectroState(vals["V"], vals["w"], vals["Ta"], Cm=e.Cm)
        if not e.enabled:
            return
        if e.model != "none":
            self.ionic = make_model(e.model, **(e.params or {}))
        if e.tensor is not None:
            D = np.broadcast_to(np.asarray(e.tensor, dtype=float), (n, self.dim, self.dim)).copy()
        else:
            frame = _fiber_frame(e.fiber, None, self.geo, self.dim, "electro.fiber")
            f0 = None if frame is None else frame.f0
            if f0 is None and e.d_ani != 0:
                raise ConfigError([("electro.fiber", "d_ani needs a fiber direction")])
            D = assemble_conductivity(e.d_iso, e.d_ani, f0, self.dim)
            if D.ndim == 2:
                D = np.broadcast_to(D, (n, self.dim, self.dim)).copy()
        model = ConductivityModel(D, compensation=e.compensation, Cm=e.Cm)
        if model.max_trace() > 0:
            self.diffusion = DiffusionOperator(self.pset, self.nl, model, self.B0 if e.correction else None,
                                               e.variant)
            self.dt_p = min(diffusion_timestep(self.kernel.h, self.dim, model.max_trace()),
                            self.diffusion.stable_dt())

    def _build_mechanics(self):
        m = self.scene.mechanics
        self.solid = None
        self.mech = None
        if m is None or not m.enabled:
            return
        self.material = build_material(m.material)
        self.frame = _fiber_frame(m.fiber, m.sheet, self.geo, self.dim, "mechanics.fiber")
        fixed = np.zeros(self.pset.count, dtype=bool)
        for c in m.constraints or []:
            fixed |= S.constraint_mask(self.pset, compile_expression(c, ("x", "y", "z")).on_points)
        self.solid = S.SolidModel(self.pset, self.nl, self.B0, self.material, self.frame, fixed,
                                  damping=m.damping, viscosity=m.viscosity)
        self.mech = S.MechState.at_rest(self.pset, m.initial_velocity)
        self.mech = S.apply_constraints(self.mech, fixed)

    def _build_coupling(self):
        c = self.scene.coupling
        self.active = None
        if c is None or not c.enabled:
            return
        self.active = c.active_stress
        if self.active.mode == "ode":
            self.active_params = ActiveStressParams(**(self.active.params or {}))
        if self.frame is None:
            raise ConfigError([("mechanics.fiber", "active stress needs a fiber direction")])

    # -- time stepping
    def dt_mechanics(self) -> float:
        if self.solid is None:
            return np.inf
        Ta = self.electro.Ta if self.active is not None else None
        return S.timestep_mechanics(self.mech, self.material, self.kernel, float(np.min(self.pset.rho0)),
                                    tangent=self.scene.mechanics.tangent_cfl, frame=self.frame, Ta=Ta)

    def _ramp(self, t):
        r = self.active.ramp
        return 1.0 if not r else min(1.0, max(0.0, (t - self.scene.time.start) / r))

    def _update_active(self, dt, t_new):
        a, st = self.active, self.electro
        if a.mode == "ode":
            st.Ta = active_stress_step(st.Ta, st.V, dt, self.active_params)
        elif a.mode == "linear":
            st.Ta = a.factor * st.V * self._ramp(t_new)
        else:
            thr = (a.params or {}).get("threshold")
            on = np.ones_like(st.V, dtype=bool) if thr is None else st.V >= thr
            st.Ta = np.where(on, a.value * self._ramp(t_new), 0.0)

    def apply_stimuli(self, t, dt=0.0):
        if self.electro is None or not self.scene.electro.enabled:
            return
        for s in self.stimuli:
            self.electro = apply_stimulus(self.electro, s, t, self.pset.r0, dt)

    def step(self, dt: float):
        e = self.scene.electro
        if self.electro is not None and e.enabled:
            st = self.electro
            if self.ionic is not None:
                st = reaction_half_step(st, dt, self.ionic, "forward")
            if self.diffusion is not None:
                st.V = st.V + dt * self.diffusion.rate(st.V)
            if self.ionic is not None:
                st = reaction_half_step(st, dt, self.ionic, "backward")
            self.electro = st
        t_new = self.t + dt
        if self.active is not None:
            self._update_active(dt, t_new)
        if self.solid is not None:
            Ta = self.electro.Ta if self.active is not None else None
            self.mech = S.verlet_step(self.mech, dt, self.solid, Ta)
        self.t = t_new
        self.step_count += 1
        self.apply_stimuli(self.t, dt)

    def fields(self) -> dict:
        out = {}
        if self.electro is not None:
            out.update(V=self.electro.V, w=self.electro.w, Ta=self.electro.Ta)
        if self.mech is not None:
            out.update(displacement=self.mech.u, velocity=self.mech.v)
        return out

    def check_finite(self):
        for name, arr in self.fields().items():
            if not np.all(np.isfinite(arr)):
                raise NumericalFailure(f"non-finite {name} at step {self.step_count} (t = {self.t:.6g})",
                                       step=self.step_count, field=name)

    def snapshot(self, path, fmt="vtk"):
        f = self.fields()
        scalars = {k: f[k] for k in ("V", "w", "Ta") if k in f}
        vectors = {}
        pos = self.pset.r0
        if self.mech is not None:
            pos = self.mech.positions(self.pset)
            vectors["displacement"] = self.mech.u
            Ta = self.electro.Ta if self.active is not None else None
            P = self.solid.stress(self.mech.F, Ta)
            scalars["von_mises"] = S.von_mises_field(P, self.mech.F)
        if fmt == "vtk":
            write_vtk_points(path, pos, scalars, vectors, title=f"{self.scene.name} t={self.t:.6g}")
        else:
            write_snapshot_csv(path, pos, scalars, vectors)

    def oracle_errors(self):
        o = self.scene.oracle
        if o is None:
            return None
        exact = oracles.evaluate(o.case, self.pset.r0, self.t, o.params, o.axis)
        num = self.fields()[o.field]
        l2, linf = oracles.error_norms(num, exact, self.pset.V)
        return {"L2": l2, "Linf": linf, "peak": float(np.max(np.abs(exact)))}


def _periodic_neighbors(pset, k, box):
    from ..particles import NeighborList, find_pairs, pair_geometry
    from ..kernels import kernel_gradient_scalar

    offsets, idx = find_pairs(pset.r0, k.cutoff, box)
    dist, e = pair_geometry(pset.r0, offsets, idx, box)
    return NeighborList(offsets, idx, dist, e, kernel_gradient_scalar(dist, k))


def run(scene: SceneConfig, out_dir=None, snapshot_every=None, geometry: Geometry | None = None,
        progress=None) -> RunResult:
    """Execute a scene; writes probes/snapshots when an output directory is set."""
    wall = _time.perf_counter()
    sim = Simulation(scene, geometry)
    out_dir = out_dir if out_dir is not None else scene.output.dir
    every = snapshot_every if snapshot_every is not None else scene.output.snapshot_every
    fmt = scene.output.snapshot_format
    nan_every = scene.output.nan_check_every
    t_end = scene.time.end
    rec = ProbeRecorder(sim.probes, sim.dim, sim.t)
    dt_log = []
    snaps = []
    next_snap = sim.t

    def snap(tag=None):
        name = f"{scene.name}_{len(snaps):05d}.{fmt}" if tag is None else f"{scene.name}_{tag}.{fmt}"
        path = os.path.join(out_dir, "snapshots", name)
        sim.snapshot(path, fmt)
        snaps.append(path)

    sim.apply_stimuli(sim.t)
    if rec.due(sim.t):
        rec.record(sim.t, sim.fields())
    if out_dir and every:
        snap()
        next_snap += every
    dt_cap = scene.time.dt_max or np.inf
    eps = 1e-12 * max(1.0, abs(t_end))
    while sim.t < t_end - eps:
        dt_m = sim.dt_mechanics()
        dt = min(sim.dt_p, dt_m, dt_cap)
        if not np.isfinite(dt):
            raise ConfigError([("time.dt_max", "no physics limits the time step; set time.dt_max")])
        dt = min(dt, t_end - sim.t)
        sim.step(dt)
        dt_log.append((sim.t, dt, sim.dt_p, dt_m))
        if sim.step_count % nan_every == 0 or sim.t >= t_end - eps:
            try:
                sim.check_finite()
            except NumericalFailure:
                if out_dir:
                    snap("failure")
                raise
        if rec.due(sim.t):
            rec.record(sim.t, sim.fields())
        if out_dir and every and sim.t >= next_snap - eps:
            snap()
            while next_snap <= sim.t + eps:
                next_snap += every
        if progress is not None:
            progress(sim)
    if rec.rows and rec.rows[-1][0] != sim.t and rec.probes:
        rec.record(sim.t, sim.fields())
    summary = {
        "scene": scene.name,
        "particles": sim.pset.count,
        "steps": sim.step_count,
        "t_end": sim.t,
        "dt_p": sim.dt_p,
        "dt_min": min((d[1] for d in dt_log), default=0.0),
        "dt_max": max((d[1] for d in dt_log), default=0.0),
        "wall_seconds": _time.perf_counter() - wall,
        "snapshots": snaps,
    }
    errs = sim.oracle_errors()
    if errs is not None:
        summary["oracle"] = errs
    if out_dir and rec.probes:
        write_probe_csv(os.path.join(out_dir, scene.output.probe_file), rec.header, rec.rows)
    return RunResult(rec.header, rec.table(), summary, np.array(dt_log).reshape(-1, 4), sim.electro, sim.mech, sim)
