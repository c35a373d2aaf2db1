"""Stimulus protocols and point probes."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.spatial import cKDTree

from ..reaction import ElectroState
from .expr import compile_expression

log = logging.getLogger(__name__)

Region = Union[str, Callable[[np.ndarray], np.ndarray]]


@dataclass
class StimulusProtocol:
    """Impose ``V = value`` (``clamp``) or inject ``value`` per unit time
    (``current``) on a region of reference positions during ``[t_on, t_off]``."""

    region: Region
    t_on: float
    t_off: float
    value: float
    label: str = "custom"
    mode: str = "clamp"
    _mask: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.t_off < self.t_on:
            raise ValueError("stimulus window must satisfy t_off >= t_on")
        if self.mode not in ("clamp", "current"):
            raise ValueError("stimulus mode must be 'clamp' or 'current'")
        if isinstance(self.region, str):
            self._expr = compile_expression(self.region, ("x", "y", "z"))
        else:
            self._expr = None

    def active(self, t: float) -> bool:
        return self.t_on <= t <= self.t_off

    def mask(self, positions) -> np.ndarray:
        """Particles selected by the region (cached per positions array)."""
        if self._mask is not None and len(self._mask) == len(positions):
            return self._mask
        pos = np.atleast_2d(np.asarray(positions, dtype=float))
        if self._expr is not None:
            m = self._expr.on_points(pos, dtype=bool)
        else:
            m = np.asarray(self.region(pos), dtype=bool)
        if m.shape != (len(pos),):
            raise ValueError("stimulus region must give one flag per particle")
        if not m.any():
            log.warning("stimulus %s selects no particles", self.label)
        self._mask = m
        return m


def apply_stimulus(state: ElectroState, protocol: StimulusProtocol, t: float, positions=None,
                   dt: float = 0.0) -> ElectroState:
    """Return ``state`` with the protocol applied at time ``t`` (unchanged
    outside the window).  ``positions`` are the reference positions."""
    if not protocol.active(t):
        return state
    if positions is None:
        if protocol._mask is None:
            raise ValueError("positions are needed the first time a region is evaluated")
        m = protocol._mask
    else:
        m = protocol.mask(positions)
    if not m.any():
        return state
    out = state.copy()
    if protocol.mode == "clamp":
        out.V[m] = protocol.value
    else:
        out.V[m] += protocol.value * dt
    return out


QUANTITY_WIDTH = {"V": 1, "w": 1, "Ta": 1, "displacement": None, "velocity": None}


@dataclass
class Probe:
    """A field sampled at the particle nearest to ``location``."""

    name: str
    location: object
    quantity: str = "V"
    interval: float = 0.0
    index: int | None = None

    def resolve(self, positions, h: float) -> int:
        """Nearest particle; it must lie within ``h`` of the requested point."""
        if isinstance(self.location, (int, np.integer)) and not isinstance(self.location, bool):
            if not 0 <= self.location < len(positions):
                raise ValueError(f"probe {self.name}: particle index {self.location} out of range")
            self.index = int(self.location)
            return self.index
        loc = np.asarray(self.location, dtype=float)
        dist, idx = cKDTree(positions).query(loc)
        if dist > h:
            raise ValueError(f"probe {self.name}: no particle within h = {h:g} of {loc.tolist()} "
                             f"(nearest at {dist:g})")
        self.index = int(idx)
        return self.index

    def columns(self, dim: int) -> list[str]:
        if QUANTITY_WIDTH.get(self.quantity) == 1:
            return [f"{self.name}_{self.quantity}"]
        return [f"{self.name}_{self.quantity}_{'xyz'[a]}" for a in range(dim)]


class ProbeRecorder:
    """Collects probe rows on a fixed schedule anchored at the start time.

    All probes share the finest requested interval (0 means every step) so
    the table has a single time column.
    """

    def __init__(self, probes, dim: int, t_start: float = 0.0):
        self.probes = list(probes)
        self.dim = dim
        intervals = [p.interval for p in self.probes if p.interval and p.interval > 0]
        self.interval = min(intervals) if intervals and len(intervals) == len(self.probes) else 0.0
        self.t_start = t_start
        self._k = 0
        self.rows: list[list[float]] = []

    @property
    def header(self) -> list[str]:
        cols = ["time"]
        for p in self.probes:
            cols.extend(p.columns(self.dim))
        return cols

    def due(self, t: float) -> bool:
        if not self.probes:
            return False
        if self.interval <= 0:
            return True
        return t >= self.t_start + self._k * self.interval - 1e-12 * max(1.0, abs(t))

    def record(self, t: float, fields: dict):
        row = [t]
        for p in self.probes:
            val = fields[p.quantity][p.index]
            row.extend(np.atleast_1d(val).tolist())
        self.rows.append(row)
        if self.interval > 0:
            while self.t_start + self._k * self.interval <= t + 1e-12 * max(1.0, abs(t)):
                self._k += 1

    def table(self) -> np.ndarray:
        return np.array(self.rows, dtype=float).reshape(-1, len(self.header))
