"""Lattice seeding inside a level set and pressure-driven particle relaxation."""
from __future__ import annotations

import logging

import numba as nb
import numpy as np
from scipy.spatial import cKDTree

from ..errors import NumericalFailure
from ..kernels import SmoothingKernel, kernel_value
from ..particles import ParticleSet, find_pairs, lattice_positions, pair_geometry
from .levelset import LevelSetGrid

log = logging.getLogger(__name__)


def generate_lattice_particles(ls: LevelSetGrid, dp: float, rho0: float = 1.0) -> ParticleSet:
    """One particle per lattice cell whose centre has ``phi > 0``; ``V = dp^d``."""
    if not dp > 0:
        raise ValueError("particle spacing must be positive")
    lo = ls.origin
    hi = ls.origin + ls.spacing * (np.array(ls.dims) - 1)
    pos = lattice_positions(lo, hi, dp)
    inside = ls.interpolate(pos) > 0
    if not inside.any():
        raise ValueError("no lattice cell centre lies inside the body (thinner than dp?)")
    return ParticleSet(pos[inside], V=dp**ls.dim, rho0=rho0)


@nb.njit(cache=True)
def _repulsion(pos, offsets, indices, V, h, sigma, box, out):
    n, d = pos.shape
    for i in range(n):
        for a in range(d):
            out[i, a] = 0.0
        for p in range(offsets[i], offsets[i + 1]):
            j = indices[p]
            r2 = 0.0
            for a in range(d):
                dx = pos[i, a] - pos[j, a]
                if box[a] > 0:
                    dx -= box[a] * np.round(dx / box[a])
                r2 += dx * dx
            r = np.sqrt(r2)
            if r <= 0.0:
                continue
            q = r / h
            s = 1.0 - 0.5 * q
            if s <= 0.0:
                continue
            dW = -5.0 * q * sigma / h * s * s * s
            for a in range(d):
                dx = pos[i, a] - pos[j, a]
                if box[a] > 0:
                    dx -= box[a] * np.round(dx / box[a])
                # -2 V_j grad_i W_ij, grad_i W = dW (r_i - r_j)/r
                out[i, a] -= 2.0 * V[j] * dW * dx / r
    return out


def jitter_particles(pset: ParticleSet, amplitude: float, seed: int = 0, ls: LevelSetGrid | None = None,
                     offset: float = 0.0) -> ParticleSet:
    """Uniform random displacement in ``[-amplitude, amplitude]`` per axis,
    pulled back inside ``ls`` when given.  Deterministic for a fixed seed."""
    rng = np.random.default_rng(seed)
    pos = pset.r0 + rng.uniform(-amplitude, amplitude, pset.r0.shape)
    if ls is not None:
        pos = project_to_body(pos, ls, offset)
    return ParticleSet(pos, V=pset.V, rho0=pset.rho0, m=pset.m)


def relaxation_acceleration(pos, V, k: SmoothingKernel, p0=2.0, rho=1.0, box=None):
    """``-(p0/rho) sum_j V_j 2 grad_i W_ij`` on current positions."""
    pos = np.ascontiguousarray(pos, dtype=float)
    b = np.zeros(pos.shape[1]) if box is None else np.asarray(box, dtype=float)
    offsets, idx = find_pairs(pos, k.cutoff, None if box is None else b)
    out = np.empty_like(pos)
    _repulsion(pos, offsets, idx, np.asarray(V, dtype=float), k.h, k.sigma, b, out)
    return (p0 / rho) * out


def project_to_body(pos, ls: LevelSetGrid, offset: float, iterations: int = 3):
    """Move points with ``phi < offset`` along the interpolated normal until
    ``phi ~ offset`` (``offset >= 0`` keeps them inside)."""
    pos = pos.copy()
    for _ in range(iterations):
        phi = ls.interpolate(pos)
        bad = phi < offset
        if not bad.any():
            break
        g = ls.gradient(pos[bad])
        gn = np.linalg.norm(g, axis=1)
        ok = gn > 1e-12
        step = np.zeros_like(g)
        step[ok] = ((offset - phi[bad][ok]) / gn[ok] ** 2)[:, None] * g[ok]
        pos[bad] += step
    return pos


def nearest_neighbor_cv(positions, box=None) -> float:
    """Coefficient of variation of nearest-neighbor distances."""
    pos = np.asarray(positions, dtype=float)
    if box is not None:
        pos = np.mod(pos, box)
    tree = cKDTree(pos, boxsize=box)
    d, _ = tree.query(pos, k=2)
    nn = d[:, 1]
    return float(nn.std() / nn.mean())


def local_density(pset: ParticleSet, k: SmoothingKernel, positions=None, box=None) -> np.ndarray:
    """``sum_j V_j W_ij`` including the particle itself."""
    pos = pset.r0 if positions is None else positions
    offsets, idx = find_pairs(pos, k.cutoff, box)
    dist, _ = pair_geometry(pos, offsets, idx, box)
    owners = np.repeat(np.arange(len(pos)), np.diff(offsets))
    rho = pset.V * kernel_value(0.0, k)
    np.add.at(rho, owners, pset.V[idx] * kernel_value(dist, k))
    return rho


def relax_particles(pset: ParticleSet, ls: LevelSetGrid | None, k: SmoothingKernel, steps: int = 5000,
                    p0: float = 2.0, rho: float = 1.0, surface_offset: float | None = None,
                    box=None, callback=None) -> ParticleSet:
    """Constant-background-pressure relaxation with surface bounding.

    Each pseudo-time step moves particles by ``0.5 a dt^2`` with
    ``dt = 0.25 sqrt(h/|a|max)`` (fully damped), then pushes particles closer
    than ``surface_offset`` (default ``dp/2``) to the surface back inside.
    ``box`` enables periodic axes (no level set needed then).
    """
    pos = pset.r0.copy()
    dp = k.dp if k.dp is not None else k.h / 1.3
    offset = 0.5 * dp if surface_offset is None else surface_offset
    for step in range(steps):
        a = relaxation_acceleration(pos, pset.V, k, p0, rho, box)
        amax = float(np.sqrt(np.einsum("na,na->n", a, a).max())) if len(a) else 0.0
        if not np.isfinite(amax):
            raise NumericalFailure(f"relaxation diverged at step {step}", step=step, field="position")
        if amax > 0:
            dt = 0.25 * np.sqrt(k.h / amax)
            pos += 0.5 * a * dt * dt
        if box is not None:
            b = np.asarray(box, dtype=float)
            per = b > 0
            pos[:, per] = np.mod(pos[:, per], b[per])
        if ls is not None:
            pos = project_to_body(pos, ls, offset)
        if not np.all(np.isfinite(pos)):
            raise NumericalFailure(f"relaxation diverged at step {step}", step=step, field="position")
        if callback is not None:
            callback(step, pos)
    return ParticleSet(pos, V=pset.V, rho0=pset.rho0, m=pset.m)
