"""Analytic signed distances (positive outside, as usual for SDF algebra).

Level-set grids use the opposite sign (positive inside); convert with a
minus sign when sampling.
"""
from __future__ import annotations

import numba as nb
import numpy as np


@nb.njit(cache=True)
def _root(e, y, active, na):
    # t in (-e_last^2, inf) with sum_active (e_k y_k / (t + e_k^2))^2 = 1
    last = active[na - 1]
    lo = -e[last] * e[last]
    norm = 0.0
    emax = 0.0
    for q in range(na):
        k = active[q]
        norm += y[k] * y[k]
        emax = max(emax, e[k])
    hi = emax * np.sqrt(norm)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        s = 0.0
        for q in range(na):
            k = active[q]
            r = e[k] * y[k] / (mid + e[k] * e[k])
            s += r * r
        if s > 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@nb.njit(cache=True)
def _closest_sorted(e, y, x):
    """Closest point ``x`` on the ellipsoid with semi-axes ``e`` (descending)
    to ``y`` (non-negative components)."""
    n = e.shape[0]
    active = np.empty(n, dtype=np.int64)
    for k in range(n):
        x[k] = 0.0
    m = n
    while m > 0:
        last = m - 1
        if m == 1:
            x[0] = e[0]
            return
        if y[last] > 0.0:
            na = 0
            for k in range(m):
                if y[k] > 0.0:
                    active[na] = k
                    na += 1
            t = _root(e, y, active, na)
            for q in range(na):
                k = active[q]
                x[k] = e[k] * e[k] * y[k] / (t + e[k] * e[k])
            return
        # y on the plane of the smallest axis: interior case first
        s = 0.0
        ok = True
        for k in range(last):
            den = e[k] * e[k] - e[last] * e[last]
            if den <= 0.0:
                ok = False
                break
            xk = e[k] * e[k] * y[k] / den
            s += (xk / e[k]) ** 2
        if ok and s < 1.0:
            for k in range(last):
                x[k] = e[k] * e[k] * y[k] / (e[k] * e[k] - e[last] * e[last])
            x[last] = e[last] * np.sqrt(1.0 - s)
            return
        x[last] = 0.0
        m -= 1


@nb.njit(cache=True)
def _ellipsoid_sdf(points, axes):
    n, d = points.shape
    order = np.argsort(-axes)
    e = axes[order]
    y = np.empty(d)
    x = np.empty(d)
    out = np.empty(n)
    for i in range(n):
        inside = 0.0
        for k in range(d):
            y[k] = abs(points[i, order[k]])
            # negligible offsets from a symmetry plane underflow the root bracket
            if y[k] < 1e-14 * e[0]:
                y[k] = 0.0
            inside += (y[k] / e[k]) ** 2
        _closest_sorted(e, y, x)
        dist = 0.0
        for k in range(d):
            dist += (y[k] - x[k]) ** 2
        dist = np.sqrt(dist)
        out[i] = dist if inside > 1.0 else -dist
    return out


def ellipsoid_sdf(points, axes, center=None):
    """Exact signed distance to an axis-aligned ellipsoid (or ellipse)."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if center is not None:
        p = p - np.asarray(center, dtype=float)
    return _ellipsoid_sdf(np.ascontiguousarray(p), np.asarray(axes, dtype=float))


def sphere_sdf(points, radius, center=None):
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if center is not None:
        p = p - np.asarray(center, dtype=float)
    return np.linalg.norm(p, axis=1) - radius


def box_sdf(points, lo, hi):
    p = np.atleast_2d(np.asarray(points, dtype=float))
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    c = 0.5 * (lo + hi)
    h = 0.5 * (hi - lo)
    q = np.abs(p - c) - h
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    inside = np.minimum(q.max(axis=1), 0.0)
    return outside + inside


def annulus_sdf(points, r_in, r_out, center=None):
    """Ring ``r_in < |x| < r_out`` (2D or a cylinder along the last axis in 3D)."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if center is not None:
        p = p - np.asarray(center, dtype=float)
    r = np.linalg.norm(p[:, :2], axis=1)
    return np.maximum(r_in - r, r - r_out)
