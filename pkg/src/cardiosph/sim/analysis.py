"""Post-processing of probe traces and particle fields.

Used by the acceptance checks and the experiment scripts: action-potential
trace metrics, activation-time maps, front-speed anisotropy and spiral tips.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TraceMetrics:
    peak: float
    t_peak: float
    active_start: float
    active_end: float
    plateau_fraction: float
    final: float


def trace_metrics(t, v, active=0.1, plateau=0.8) -> TraceMetrics:
    """Upstroke/plateau/repolarization summary of a single potential trace.

    The active interval runs from the first sample above ``active`` to the
    first later sample back at or below it (or the end of the trace).
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    above = np.nonzero(v > active)[0]
    k = int(np.argmax(v))
    if above.size == 0:
        return TraceMetrics(float(v[k]), float(t[k]), np.nan, np.nan, 0.0, float(v[-1]))
    i0 = above[0]
    back = np.nonzero(v[i0:] <= active)[0]
    i1 = i0 + back[0] if back.size else len(v) - 1
    seg = slice(i0, i1 + 1)
    dt = np.diff(t[seg])
    high = (v[seg][:-1] >= plateau) & (v[seg][1:] >= plateau)
    span = t[i1] - t[i0]
    frac = float(np.sum(dt[high]) / span) if span > 0 else 0.0
    return TraceMetrics(float(v[k]), float(t[k]), float(t[i0]), float(t[i1]), frac, float(v[-1]))


class ActivationRecorder:
    """First time each particle crosses ``threshold`` upward, linearly interpolated."""

    def __init__(self, V0, t0=0.0, threshold=0.5):
        V0 = np.asarray(V0, dtype=float)
        self.threshold = threshold
        self.times = np.where(V0 > threshold, t0, np.inf)
        self._t, self._V = t0, V0.copy()

    def update(self, t, V):
        V = np.asarray(V, dtype=float)
        new = (V > self.threshold) & np.isinf(self.times)
        if np.any(new):
            v0 = self._V[new]
            self.times[new] = self._t + (t - self._t) * (self.threshold - v0) / (V[new] - v0)
        self._t, self._V = t, V.copy()


def lattice_order(r0):
    """Permutation and shape turning a full 2D lattice cloud into an (ny, nx) grid."""
    r0 = np.asarray(r0)
    xs = np.unique(np.round(r0[:, 0], 12))
    ys = np.unique(np.round(r0[:, 1], 12))
    if xs.size * ys.size != len(r0):
        raise ValueError("particles do not form a complete rectangular lattice")
    return np.lexsort((r0[:, 0], r0[:, 1])), (ys.size, xs.size)


def front_speed_ratio(r0, act, t_min=0.0, dominance=6.0):
    """Ratio of x- to y-directed front speeds from an activation-time map.

    Speeds are the median of ``1/|dT/dx|`` over cells whose front normal is
    dominantly along x, and likewise for y; cells activated before ``t_min``
    (the initial condition) are ignored. Returns ``(ratio, c_x, c_y)``.
    """
    order, shape = lattice_order(r0)
    grid = r0[order]
    hx = (grid[:, 0].max() - grid[:, 0].min()) / (shape[1] - 1)
    hy = (grid[:, 1].max() - grid[:, 1].min()) / (shape[0] - 1)
    A = np.asarray(act, dtype=float)[order].reshape(shape)
    A = np.where(np.isfinite(A), A, np.nan)
    Ay, Ax = np.gradient(A, hy, hx)
    ok = np.isfinite(Ax) & np.isfinite(Ay) & (A > t_min)
    mx = ok & (np.abs(Ax) > dominance * np.abs(Ay))
    my = ok & (np.abs(Ay) > dominance * np.abs(Ax))
    if not mx.any() or not my.any():
        return np.nan, np.nan, np.nan
    cx = float(np.median(1.0 / np.abs(Ax[mx])))
    cy = float(np.median(1.0 / np.abs(Ay[my])))
    return cx / cy, cx, cy


def spiral_tip(r0, V, w, v_star=0.5, w_star=0.05):
    """Tip of a 2D spiral as the crossing of the ``V = v_star`` and ``w = w_star`` isolines.

    Works on a complete lattice; returns the mean centre of all grid cells
    where both fields change sign, or ``None`` if the isolines do not meet.
    """
    order, shape = lattice_order(r0)
    grid = r0[order].reshape(shape + (2,))

    def crosses(F):
        F = F[order].reshape(shape)
        c = np.stack([F[:-1, :-1], F[1:, :-1], F[:-1, 1:], F[1:, 1:]])
        return (c.min(axis=0) <= 0) & (c.max(axis=0) > 0)

    m = crosses(np.asarray(V) - v_star) & crosses(np.asarray(w) - w_star)
    if not m.any():
        return None
    centres = 0.25 * (grid[:-1, :-1] + grid[1:, :-1] + grid[:-1, 1:] + grid[1:, 1:])
    return centres[m].mean(axis=0)
