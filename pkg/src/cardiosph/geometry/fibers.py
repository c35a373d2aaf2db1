"""Transmural pseudo-distance and rule-based fiber/sheet reconstruction."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from ..errors import NumericalFailure
from .levelset import LevelSetGrid

log = logging.getLogger(__name__)

THETA_EPI_DEG = -70.0
THETA_ENDO_DEG = 80.0


@nb.njit(cache=True)
def _sor(psi, code, omega, tol, max_iter):
    # code: 0 outside (Neumann), 1 unknown, 2 Dirichlet
    nx, ny, nz = psi.shape
    for it in range(max_iter):
        worst = 0.0
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    if code[i, j, k] != 1:
                        continue
                    acc = 0.0
                    cnt = 0
                    if i > 0 and code[i - 1, j, k] > 0:
                        acc += psi[i - 1, j, k]
                        cnt += 1
                    if i < nx - 1 and code[i + 1, j, k] > 0:
                        acc += psi[i + 1, j, k]
                        cnt += 1
                    if j > 0 and code[i, j - 1, k] > 0:
                        acc += psi[i, j - 1, k]
                        cnt += 1
                    if j < ny - 1 and code[i, j + 1, k] > 0:
                        acc += psi[i, j + 1, k]
                        cnt += 1
                    if k > 0 and code[i, j, k - 1] > 0:
                        acc += psi[i, j, k - 1]
                        cnt += 1
                    if k < nz - 1 and code[i, j, k + 1] > 0:
                        acc += psi[i, j, k + 1]
                        cnt += 1
                    if cnt == 0:
                        continue
                    upd = omega * (acc / cnt - psi[i, j, k])
                    psi[i, j, k] += upd
                    if abs(upd) > worst:
                        worst = abs(upd)
        if worst < tol:
            return it + 1, worst
    return -1, worst


def solve_pseudo_distance(domain, epi, endo, tol: float = 1e-10, max_iter: int = 100000,
                          omega: float | None = None) -> np.ndarray:
    """Discrete Laplace problem on a node mask (2D or 3D arrays).

    ``psi = 1`` on ``epi`` nodes, ``0`` on ``endo`` nodes, zero normal flux
    where a node borders anything else.  Successive over-relaxation in a
    fixed lexicographic order until the largest update drops below ``tol``.
    """
    domain = np.asarray(domain, dtype=bool)
    epi = np.asarray(epi, dtype=bool)
    endo = np.asarray(endo, dtype=bool)
    if not epi.any() or not endo.any():
        raise ValueError("both epicardial and endocardial boundary bands must be non-empty")
    shape = domain.shape
    if len(shape) == 2:
        domain, epi, endo = domain[..., None], epi[..., None], endo[..., None]
    code = np.zeros(domain.shape, dtype=np.int8)
    code[domain] = 1
    code[epi | endo] = 2
    psi = np.where(epi, 1.0, 0.0)
    psi[code == 1] = 0.5
    if omega is None:
        n = max(domain.shape)
        omega = 2.0 / (1.0 + np.sin(np.pi / max(n, 2)))
    iters, resid = _sor(psi, code, float(omega), float(tol), int(max_iter))
    if iters < 0:
        raise NumericalFailure(f"pseudo-distance solve did not converge (max update {resid:.3e})",
                               step=max_iter, field="psi")
    log.debug("pseudo-distance converged in %d sweeps", iters)
    psi = np.clip(psi, 0.0, 1.0)
    return psi.reshape(shape)


def extend_field(values, valid) -> np.ndarray:
    """Fill invalid nodes with the value of the nearest valid node."""
    _, idx = ndimage.distance_transform_edt(~np.asarray(valid, dtype=bool), return_indices=True)
    return values[tuple(idx)]


@dataclass
class FiberField:
    f0: np.ndarray
    s0: np.ndarray
    psi: np.ndarray
    flagged: np.ndarray  # particles that fell back to a neighbor's frame
    f_flat: np.ndarray   # unrotated (normalized) flat fiber direction

    def angles(self) -> np.ndarray:
        """Rotation angle (rad) of ``f0`` about ``s0`` relative to ``f_flat``."""
        return fiber_angle(self.f0, self.s0, self.f_flat)


def fiber_angle(f0, s0, f_flat):
    b = np.cross(s0, f_flat)
    return np.arctan2(np.einsum("na,na->n", f0, b), np.einsum("na,na->n", f0, f_flat))


def rotation_angle(psi, theta_epi=np.deg2rad(THETA_EPI_DEG), theta_endo=np.deg2rad(THETA_ENDO_DEG)):
    """``theta = (theta_epi - theta_endo) psi + theta_endo``."""
    return (theta_epi - theta_endo) * np.asarray(psi, dtype=float) + theta_endo


def rodrigues(v, axis, theta):
    """Rotate ``v`` about unit ``axis`` by ``theta`` (row-wise)."""
    c = np.cos(theta)[..., None]
    s = np.sin(theta)[..., None]
    return v * c + np.cross(axis, v) * s + axis * np.einsum("...a,...a->...", axis, v)[..., None] * (1 - c)


def reconstruct_fibers(points, ls: LevelSetGrid, psi, theta_epi_deg: float = THETA_EPI_DEG,
                       theta_endo_deg: float = THETA_ENDO_DEG, axis=(0.0, 1.0, 0.0)) -> FiberField:
    """Sheet along the level-set normal (oriented with ``axis``), flat fiber
    ``s0 x axis``, rotated about ``s0`` by the transmural angle."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    psi = np.asarray(psi, dtype=float)
    ey = np.asarray(axis, dtype=float)
    ey = ey / np.linalg.norm(ey)
    g = ls.gradient(pts)
    gn = np.linalg.norm(g, axis=1)
    valid = gn > 1e-8
    N = np.zeros_like(g)
    N[valid] = g[valid] / gn[valid, None]
    sgn = np.where(N @ ey < 0, -1.0, 1.0)
    s0 = sgn[:, None] * N
    ft = np.cross(s0, ey)
    ftn = np.linalg.norm(ft, axis=1)
    valid &= ftn > 1e-6
    ft[valid] /= ftn[valid, None]
    flagged = ~valid
    if flagged.any():
        if not valid.any():
            raise ValueError("no particle has a usable level-set normal")
        log.warning("%d particles without a usable normal use their nearest neighbor's frame", flagged.sum())
        _, near = cKDTree(pts[valid]).query(pts[flagged])
        src = np.flatnonzero(valid)[near]
        s0[flagged], ft[flagged] = s0[src], ft[src]
    theta = rotation_angle(psi, np.deg2rad(theta_epi_deg), np.deg2rad(theta_endo_deg))
    f0 = rodrigues(ft, s0, theta)
    # restore exact unit length and orthogonality
    f0 -= np.einsum("na,na->n", f0, s0)[:, None] * s0
    f0 /= np.linalg.norm(f0, axis=1)[:, None]
    s0 /= np.linalg.norm(s0, axis=1)[:, None]
    return FiberField(f0, s0, psi, flagged, ft)
