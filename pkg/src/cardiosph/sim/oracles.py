"""Closed-form diffusion solutions used as benchmark oracles."""
from __future__ import annotations

import numpy as np
from scipy.special import erfc

BAND = dict(C0=1.0, d_iso=1e-4, z0=0.5, z1=0.45, z2=0.55)
EXP = dict(C0=1.0, d_iso=1e-4, z0=0.5, t0=1.0)
ANISO_D1 = ((0.09, 0.0), (0.0, 0.03))
ANISO_D2 = ((0.1, 0.0), (0.0, 0.01))


def oracle_band_diffusion(z, t, C0=1.0, d_iso=1e-4, z0=0.5, z1=0.45, z2=0.55):
    """Spreading of a uniform band ``z1 <= z <= z2`` of height ``C0``.

    Each half of the profile is the error-function front of its own edge.
    """
    if not t > 0:
        raise ValueError("band solution needs t > 0")
    z = np.asarray(z, dtype=float)
    s = np.sqrt(4.0 * d_iso * t)
    return np.where(z <= z0, 0.5 * C0 * erfc((z1 - z) / s), 0.5 * C0 * erfc((z - z2) / s))


def oracle_exp_diffusion(z, t, C0=1.0, d_iso=1e-4, z0=0.5, t0=1.0):
    """Gaussian pulse that was a point source ``t0`` before the start."""
    if t < 0:
        raise ValueError("time must be non-negative")
    z = np.asarray(z, dtype=float)
    tt = t + t0
    return C0 / np.sqrt(tt) * np.exp(-((z - z0) ** 2) / (4.0 * d_iso * tt))


def oracle_aniso_gaussian(x, t, D, x0=(100.0, 100.0)):
    """Unit-mass point source in 2D with diagonal conductivity ``D``."""
    if not t > 0:
        raise ValueError("Gaussian solution needs t > 0")
    D = np.asarray(D, dtype=float)
    if D.shape != (2, 2) or D[0, 1] != 0 or D[1, 0] != 0:
        raise ValueError("expected a diagonal 2x2 conductivity")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x0 = np.asarray(x0, dtype=float)
    dxx, dyy = D[0, 0], D[1, 1]
    arg = (x[:, 0] - x0[0]) ** 2 / (4 * t * dxx) + (x[:, 1] - x0[1]) ** 2 / (4 * t * dyy)
    return np.exp(-arg) / (4 * np.pi * t * np.sqrt(dxx * dyy))


def error_norms(numerical, exact, volumes=None):
    """Volume-weighted L2 (normalized by total volume) and pointwise Linf."""
    num = np.asarray(numerical, dtype=float)
    ex = np.asarray(exact, dtype=float)
    if num.shape != ex.shape:
        raise ValueError("fields must be sampled at the same locations")
    diff = num - ex
    V = np.ones_like(diff) if volumes is None else np.broadcast_to(np.asarray(volumes, dtype=float), diff.shape)
    l2 = float(np.sqrt(np.sum(V * diff**2) / np.sum(V)))
    linf = float(np.max(np.abs(diff))) if diff.size else 0.0
    return l2, linf


def half_width(coords, values, level=0.5):
    """Full width of a 1D profile at ``level * max`` by linear interpolation."""
    c = np.asarray(coords, dtype=float)
    v = np.asarray(values, dtype=float)
    order = np.argsort(c)
    c, v = c[order], v[order]
    target = level * v.max()
    k = int(np.argmax(v))
    above = v >= target

    def crossing(idx_in, idx_out):
        c0, c1, v0, v1 = c[idx_in], c[idx_out], v[idx_in], v[idx_out]
        return c0 + (target - v0) * (c1 - c0) / (v1 - v0)

    left = k
    while left > 0 and above[left - 1]:
        left -= 1
    right = k
    while right < len(c) - 1 and above[right + 1]:
        right += 1
    if left == 0 or right == len(c) - 1:
        raise ValueError("profile does not fall below the level on both sides")
    return crossing(right, right + 1) - crossing(left, left - 1)


def evaluate(case: str, points, t: float, params=None, axis: int = 1):
    """Dispatch used by scenes and the CLI (``points`` are particle positions)."""
    params = dict(params or {})
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if case == "band":
        return oracle_band_diffusion(p[:, axis], t, **{**BAND, **params})
    if case == "exp":
        return oracle_exp_diffusion(p[:, axis], t, **{**EXP, **params})
    if case == "aniso_gaussian":
        D = params.pop("D", ANISO_D1)
        return oracle_aniso_gaussian(p[:, :2], t, D, **params)
    raise ValueError(f"unknown oracle {case!r}")
