"""Scene configuration: nested dataclasses, YAML I/O and validation.

A scene file is YAML with the sections below (all optional except
``geometry`` and ``time``)::

    name: pulse
    seed: 0
    geometry:   {kind: block, lo: [0, 0], hi: [1, 1], dp: 0.01}
    electro:    {model: aliev_panfilov, d_iso: 1.0, initial: {V: "exp(-((x-1)**2+y**2)/0.25)"}}
    mechanics:  {material: {model: holzapfel_ogden, preset: myocardium}, constraints: ["z < 0"]}
    coupling:   {active_stress: {mode: ode, params: {k_a: 1.0}}}
    stimuli:    [{label: S1, region: "x < 0.1", t_on: 0, t_off: 0.5, value: 1.0}]
    probes:     [{name: P, location: [0.3, 0.7], quantity: V, interval: 0.1}]
    oracle:     {case: band, params: {d_iso: 1.0e-4}, axis: 1}
    time:       {end: 16.0}
    output:     {snapshot_every: 1.0, snapshot_format: vtk}

``load_scene`` collects every problem (unknown keys, wrong types, missing
blocks, non-physical values) before raising, each tagged with its dotted path.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from ..errors import ConfigError
from .expr import ExpressionError, compile_expression

GEOMETRY_KINDS = ("block", "analytic", "stl", "biventricle")
SHAPES = ("disk", "sphere", "ellipsoid", "annulus", "box")
IONIC_MODELS = ("none", "aliev_panfilov", "fitzhugh_nagumo")
MATERIALS = ("neo_hookean", "holzapfel_ogden")
PRESETS = ("cantilever", "myocardium", "myocardium_isotropic")
ACTIVE_MODES = ("ode", "constant", "linear")
QUANTITIES = ("V", "w", "Ta", "displacement", "velocity")
ORACLES = ("band", "exp", "aniso_gaussian")


@dataclass
class GeometryConfig:
    kind: str = "block"
    dp: float = 0.01
    lo: Optional[list] = None
    hi: Optional[list] = None
    periodic: Optional[list] = None
    shape: Optional[str] = None
    params: dict = field(default_factory=dict)
    path: Optional[str] = None
    grid_spacing: Optional[float] = None
    relax_steps: int = 0
    jitter: float = 0.0
    rho0: float = 1.0


@dataclass
class KernelConfig:
    h_over_dp: float = 1.3


@dataclass
class ElectroConfig:
    enabled: bool = True
    model: str = "aliev_panfilov"
    params: dict = field(default_factory=dict)
    d_iso: float = 1.0
    d_ani: float = 0.0
    tensor: Optional[list] = None
    fiber: Optional[Any] = None
    compensation: str = "stencil"
    variant: str = "mean_factor"
    correction: bool = True
    Cm: float = 1.0
    initial: dict = field(default_factory=dict)


@dataclass
class MaterialConfig:
    model: str = "neo_hookean"
    preset: Optional[str] = None
    params: dict = field(default_factory=dict)


@dataclass
class MechanicsConfig:
    enabled: bool = True
    material: Optional[MaterialConfig] = None
    fiber: Optional[Any] = None
    sheet: Optional[list] = None
    constraints: list = field(default_factory=list)
    initial_velocity: Optional[list] = None
    damping: float = 0.0
    viscosity: float = 0.0
    tangent_cfl: bool = True


@dataclass
class ActiveStressConfig:
    mode: str = "ode"
    params: dict = field(default_factory=dict)
    value: float = 0.0
    factor: float = 0.0
    ramp: float = 0.0


@dataclass
class CouplingConfig:
    enabled: bool = True
    active_stress: Optional[ActiveStressConfig] = None


@dataclass
class StimulusConfig:
    region: str = "False"
    t_on: float = 0.0
    t_off: float = 0.0
    value: float = 1.0
    label: str = "custom"
    mode: str = "clamp"


@dataclass
class ProbeConfig:
    name: str = "probe"
    location: Any = None
    quantity: str = "V"
    interval: float = 0.0


@dataclass
class OracleConfig:
    case: str = "band"
    params: dict = field(default_factory=dict)
    axis: int = 1
    field: str = "V"


@dataclass
class TimeConfig:
    end: float = 1.0
    start: float = 0.0
    dt_max: Optional[float] = None


@dataclass
class OutputConfig:
    dir: Optional[str] = None
    snapshot_every: Optional[float] = None
    snapshot_format: str = "vtk"
    nan_check_every: int = 100
    probe_file: str = "probes.csv"


@dataclass
class SceneConfig:
    geometry: GeometryConfig
    time: TimeConfig
    name: str = "scene"
    seed: int = 0
    kernel: KernelConfig = field(default_factory=KernelConfig)
    electro: Optional[ElectroConfig] = None
    mechanics: Optional[MechanicsConfig] = None
    coupling: Optional[CouplingConfig] = None
    stimuli: list = field(default_factory=list)
    probes: list = field(default_factory=list)
    oracle: Optional[OracleConfig] = None
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def electro_on(self) -> bool:
        return self.electro is not None and self.electro.enabled

    @property
    def mechanics_on(self) -> bool:
        return self.mechanics is not None and self.mechanics.enabled

    @property
    def coupling_on(self) -> bool:
        return self.coupling is not None and self.coupling.enabled

    @property
    def dim(self) -> int:
        g = self.geometry
        if g.kind == "block" and isinstance(g.lo, list):
            return len(g.lo)
        if g.kind == "analytic":
            if g.shape in ("disk", "annulus"):
                return 2
            if g.shape == "box" and isinstance(g.params.get("lo"), list):
                return len(g.params["lo"])
        return 3


_LIST_OF = {"stimuli": StimulusConfig, "probes": ProbeConfig}


def _hints(cls):
    return typing.get_type_hints(cls)


def _unwrap(tp):
    if typing.get_origin(tp) is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        return args[0] if len(args) == 1 else Any
    return tp


def _build(cls, data, path, errors):
    if not isinstance(data, dict):
        errors.append(f"{path or '<root>'}: expected a mapping, got {type(data).__name__}")
        return None
    hints = _hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        p = f"{path}.{key}" if path else str(key)
        if key not in names:
            errors.append(f"{p}: unknown key")
            continue
        tp = _unwrap(hints[key])
        if value is None:
            kwargs[key] = None
            continue
        if dataclasses.is_dataclass(tp):
            kwargs[key] = _build(tp, value, p, errors)
        elif key in _LIST_OF and cls is SceneConfig:
            if not isinstance(value, list):
                errors.append(f"{p}: expected a list")
                continue
            kwargs[key] = [_build(_LIST_OF[key], v, f"{p}[{i}]", errors) for i, v in enumerate(value)]
        else:
            kwargs[key] = _coerce(tp, value, p, errors)
    for f in dataclasses.fields(cls):
        required = f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
        if required and f.name not in kwargs:
            errors.append(f"{path + '.' if path else ''}{f.name}: required block missing")
    if any(f.name not in kwargs and f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
           for f in dataclasses.fields(cls)):
        return None
    try:
        return cls(**kwargs)
    except TypeError as exc:
        errors.append(f"{path or '<root>'}: {exc}")
        return None


def _coerce(tp, value, path, errors):
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(f"{path}: expected a number, got {value!r}")
            return None
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            errors.append(f"{path}: expected an integer, got {value!r}")
            return None
        return value
    if tp is bool:
        if not isinstance(value, bool):
            errors.append(f"{path}: expected true/false, got {value!r}")
            return None
        return value
    if tp is str:
        if not isinstance(value, str):
            errors.append(f"{path}: expected a string, got {value!r}")
            return None
        return value
    if tp is list:
        if not isinstance(value, list):
            errors.append(f"{path}: expected a list, got {value!r}")
            return None
        return value
    if tp is dict:
        if not isinstance(value, dict):
            errors.append(f"{path}: expected a mapping, got {value!r}")
            return None
        return value
    return value


def _positive(errors, path, value, strict=True):
    if value is None:
        return
    if (strict and not value > 0) or (not strict and value < 0):
        errors.append(f"{path}: must be {'positive' if strict else 'non-negative'} (got {value})")


def _expr(errors, path, text, variables=("x", "y", "z", "t")):
    try:
        compile_expression(str(text) if not isinstance(text, (int, float)) else repr(float(text)), variables)
    except ExpressionError as exc:
        errors.append(f"{path}: {exc}")


def _vector(errors, path, value, dim=None):
    if not isinstance(value, (list, tuple)) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        errors.append(f"{path}: expected a list of numbers")
        return False
    if dim is not None and len(value) != dim:
        errors.append(f"{path}: expected {dim} components, got {len(value)}")
        return False
    return True


def validate(scene: SceneConfig) -> list[str]:
    """Semantic checks; returns every problem found (empty when valid)."""
    errors: list[str] = []
    g = scene.geometry
    if g.kind not in GEOMETRY_KINDS:
        errors.append(f"geometry.kind: must be one of {GEOMETRY_KINDS}")
    _positive(errors, "geometry.dp", g.dp)
    _positive(errors, "geometry.rho0", g.rho0)
    if g.relax_steps is not None and g.relax_steps < 0:
        errors.append("geometry.relax_steps: must be non-negative")
    if g.jitter is not None and not 0 <= g.jitter < 0.5:
        errors.append("geometry.jitter: must lie in [0, 0.5) particle spacings")
    dim = None
    if g.kind == "block":
        if g.lo is None or g.hi is None:
            errors.append("geometry: block geometry needs lo and hi")
        elif _vector(errors, "geometry.lo", g.lo) and _vector(errors, "geometry.hi", g.hi, len(g.lo)):
            dim = len(g.lo)
            if not 1 <= dim <= 3:
                errors.append("geometry.lo: dimension must be 1, 2 or 3")
            if any(b <= a for a, b in zip(g.lo, g.hi)):
                errors.append("geometry.hi: must exceed lo in every direction")
        if g.periodic is not None and (not isinstance(g.periodic, list) or len(g.periodic) != len(g.lo or [])
                                       or not all(isinstance(p, bool) for p in g.periodic)):
            errors.append("geometry.periodic: expected one true/false flag per axis")
    elif g.kind == "analytic":
        if g.shape not in SHAPES:
            errors.append(f"geometry.shape: must be one of {SHAPES}")
    elif g.kind == "stl":
        if not g.path:
            errors.append("geometry.path: STL geometry needs a file path")
    if g.grid_spacing is not None:
        _positive(errors, "geometry.grid_spacing", g.grid_spacing)
    if dim is None:
        dim = scene.dim

    _positive(errors, "kernel.h_over_dp", scene.kernel.h_over_dp)
    t = scene.time
    if t.end is None or t.start is None or not t.end > t.start:
        errors.append("time.end: must be greater than time.start")
    if t.end is not None and not t.end > 0:
        errors.append("time.end: must be positive")
    _positive(errors, "time.dt_max", t.dt_max)

    e = scene.electro
    if e is not None:
        if e.model not in IONIC_MODELS:
            errors.append(f"electro.model: must be one of {IONIC_MODELS}")
        _positive(errors, "electro.d_iso", e.d_iso, strict=False)
        _positive(errors, "electro.d_ani", e.d_ani, strict=False)
        _positive(errors, "electro.Cm", e.Cm)
        if e.tensor is not None:
            if not (isinstance(e.tensor, list) and len(e.tensor) == dim
                    and all(isinstance(r, list) and len(r) == dim for r in e.tensor)):
                errors.append(f"electro.tensor: expected a {dim}x{dim} nested list")
        elif e.d_iso is not None and e.d_ani is not None and e.d_iso + e.d_ani <= 0:
            errors.append("electro.d_iso: conductivity must not vanish")
        if e.fiber is not None and e.fiber != "rule_based":
            _vector(errors, "electro.fiber", e.fiber, dim)
        if e.compensation not in ("none", "continuum", "stencil"):
            errors.append("electro.compensation: must be none, continuum or stencil")
        if e.variant not in ("mean_factor", "pair_cholesky"):
            errors.append("electro.variant: must be mean_factor or pair_cholesky")
        for key, text in (e.initial or {}).items():
            if key not in ("V", "w", "Ta"):
                errors.append(f"electro.initial.{key}: unknown field (use V, w or Ta)")
            else:
                _expr(errors, f"electro.initial.{key}", text, ("x", "y", "z"))

    m = scene.mechanics
    if m is not None and m.enabled:
        if m.material is None:
            errors.append("mechanics.material: required block missing")
        else:
            if m.material.model not in MATERIALS:
                errors.append(f"mechanics.material.model: must be one of {MATERIALS}")
            if m.material.preset is not None and m.material.preset not in PRESETS:
                errors.append(f"mechanics.material.preset: must be one of {PRESETS}")
            for k, v in (m.material.params or {}).items():
                if not isinstance(v, (int, float)) or isinstance(v, bool):
                    errors.append(f"mechanics.material.params.{k}: expected a number")
                elif v < 0 and k != "nu":
                    errors.append(f"mechanics.material.params.{k}: must be non-negative")
        _positive(errors, "mechanics.damping", m.damping, strict=False)
        _positive(errors, "mechanics.viscosity", m.viscosity, strict=False)
        for i, c in enumerate(m.constraints or []):
            _expr(errors, f"mechanics.constraints[{i}]", c, ("x", "y", "z"))
        if m.initial_velocity is not None:
            _vector(errors, "mechanics.initial_velocity", m.initial_velocity, dim)
        if m.fiber is not None and m.fiber != "rule_based":
            _vector(errors, "mechanics.fiber", m.fiber, dim)
        if m.sheet is not None:
            _vector(errors, "mechanics.sheet", m.sheet, dim)

    c = scene.coupling
    if c is not None and c.enabled:
        if m is None or not m.enabled or m.material is None:
            errors.append("coupling: requires an enabled mechanics block with a material")
        if c.active_stress is None:
            errors.append("coupling.active_stress: required block missing")
        elif c.active_stress.mode not in ACTIVE_MODES:
            errors.append(f"coupling.active_stress.mode: must be one of {ACTIVE_MODES}")
        elif c.active_stress.ramp is not None and c.active_stress.ramp < 0:
            errors.append("coupling.active_stress.ramp: must be non-negative")
        if e is None:
            errors.append("coupling: requires an electro block (its V drives the active stress)")

    for i, s in enumerate(scene.stimuli):
        if s is None:
            continue
        p = f"stimuli[{i}]"
        if s.t_off is not None and s.t_on is not None and s.t_off < s.t_on:
            errors.append(f"{p}.t_off: must not precede t_on")
        if s.mode not in ("clamp", "current"):
            errors.append(f"{p}.mode: must be clamp or current")
        _expr(errors, f"{p}.region", s.region, ("x", "y", "z"))
        if e is None:
            errors.append(f"{p}: stimuli need an electro block")
    names = set()
    for i, pr in enumerate(scene.probes):
        if pr is None:
            continue
        p = f"probes[{i}]"
        if pr.quantity not in QUANTITIES:
            errors.append(f"{p}.quantity: must be one of {QUANTITIES}")
        elif pr.quantity in ("displacement", "velocity") and not scene.mechanics_on:
            errors.append(f"{p}.quantity: {pr.quantity} needs mechanics enabled")
        elif pr.quantity in ("V", "w", "Ta") and e is None:
            errors.append(f"{p}.quantity: {pr.quantity} needs an electro block")
        if pr.location is None or not (isinstance(pr.location, int) and not isinstance(pr.location, bool)):
            if pr.location is None or not _vector(errors, f"{p}.location", pr.location, dim):
                if pr.location is None:
                    errors.append(f"{p}.location: required")
        _positive(errors, f"{p}.interval", pr.interval, strict=False)
        if pr.name in names:
            errors.append(f"{p}.name: duplicate probe name {pr.name!r}")
        names.add(pr.name)
    o = scene.oracle
    if o is not None:
        if o.case not in ORACLES:
            errors.append(f"oracle.case: must be one of {ORACLES}")
        if o.field not in ("V", "w"):
            errors.append("oracle.field: must be V or w")
    out = scene.output
    if out.snapshot_format not in ("vtk", "csv"):
        errors.append("output.snapshot_format: must be vtk or csv")
    _positive(errors, "output.snapshot_every", out.snapshot_every)
    if out.nan_check_every is not None and out.nan_check_every < 1:
        errors.append("output.nan_check_every: must be at least 1")
    return errors


def scene_from_dict(data) -> SceneConfig:
    errors: list[str] = []
    scene = _build(SceneConfig, data, "", errors)
    if scene is not None:
        # semantic checks still run next to structural errors so every problem
        # is reported at once; a mistyped field may make some of them moot
        try:
            errors.extend(e for e in validate(scene) if e not in errors)
        except (TypeError, AttributeError):
            if not errors:
                raise
    if errors:
        raise ConfigError(_pairs(errors))
    return scene


def _pairs(errors):
    return [tuple(e.split(": ", 1)) if ": " in e else ("<root>", e) for e in errors]


def load_scene(text: str) -> SceneConfig:
    """Parse and validate a YAML scene; raises ``ConfigError`` listing every problem."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([("<root>", f"YAML syntax error: {exc}")]) from None
    if data is None:
        raise ConfigError([("<root>", "empty scene")])
    return scene_from_dict(data)


def load_scene_file(path) -> SceneConfig:
    with open(path, encoding="utf-8") as fh:
        return load_scene(fh.read())


def _prune(obj):
    if isinstance(obj, dict):
        return {k: _prune(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, list):
        return [_prune(v) for v in obj]
    return obj


def scene_to_dict(scene: SceneConfig) -> dict:
    return _prune(dataclasses.asdict(scene))


def dump_scene(scene: SceneConfig) -> str:
    return yaml.safe_dump(scene_to_dict(scene), sort_keys=False, default_flow_style=None)
