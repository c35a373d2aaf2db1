"""Reference-configuration particle storage, neighbor search, correction matrices.

Neighbor lists are built once on the reference positions and never change
(total-Lagrangian formulation).  They are stored CSR-style: the neighbors of
particle ``i`` are ``indices[offsets[i]:offsets[i + 1]]``, ordered by cell
and then by id, so every per-particle sum is evaluated in a fixed order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .errors import SingularMomentError
from .kernels import SmoothingKernel, kernel_gradient_scalar


@dataclass
class ParticleSet:
    """Reference positions plus per-particle volume, mass and density."""

    r0: np.ndarray
    V: np.ndarray
    rho0: np.ndarray
    m: np.ndarray = field(default=None)

    def __post_init__(self):
        self.r0 = np.ascontiguousarray(np.atleast_2d(np.asarray(self.r0, dtype=float)))
        n = len(self.r0)
        self.V = np.broadcast_to(np.asarray(self.V, dtype=float), (n,)).copy()
        self.rho0 = np.broadcast_to(np.asarray(self.rho0, dtype=float), (n,)).copy()
        if self.m is None:
            self.m = self.rho0 * self.V
        else:
            self.m = np.broadcast_to(np.asarray(self.m, dtype=float), (n,)).copy()
        if n and not np.all(np.isfinite(self.r0)):
            raise ValueError("particle positions must be finite")
        if np.any(self.V <= 0):
            raise ValueError("particle volumes must be positive")

    @property
    def count(self) -> int:
        return len(self.r0)

    @property
    def dim(self) -> int:
        return self.r0.shape[1]

    @classmethod
    def lattice(cls, lo, hi, dp, rho0=1.0) -> "ParticleSet":
        """Cell-centred lattice filling the box ``[lo, hi]`` with spacing ``dp``."""
        return cls(lattice_positions(lo, hi, dp), V=dp ** len(np.atleast_1d(lo)), rho0=rho0)


def lattice_positions(lo, hi, dp):
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    axes = []
    for a, b in zip(lo, hi):
        n = int(round((b - a) / dp))
        axes.append(a + dp * (np.arange(n) + 0.5))
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


@dataclass(frozen=True)
class NeighborList:
    """Fixed pair data.  ``e[p]`` is the unit vector from the neighbor to the
    owner (``(r_i - r_j)/|r_i - r_j|``) so ``grad_i W_ij = dW[p] * e[p]``."""

    offsets: np.ndarray
    indices: np.ndarray
    dist: np.ndarray
    e: np.ndarray
    dW: np.ndarray

    @property
    def count(self) -> int:
        return len(self.offsets) - 1

    @property
    def n_pairs(self) -> int:
        return len(self.indices)

    def owners(self) -> np.ndarray:
        """Owner particle of every stored pair."""
        return np.repeat(np.arange(self.count), np.diff(self.offsets))

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.offsets[i]:self.offsets[i + 1]]


@nb.njit(cache=True)
def _scan(i, pos, cell, ncell, box, start, order, c2, out, cursor, write):
    n_found = 0
    lo0 = -1 if ncell[0] > 1 else 0
    lo1 = -1 if ncell[1] > 1 else 0
    lo2 = -1 if ncell[2] > 1 else 0
    for dx in range(lo0, -lo0 + 1):
        cx = cell[i, 0] + dx
        if box[0] > 0:
            cx = cx % ncell[0]
        elif cx < 0 or cx >= ncell[0]:
            continue
        for dy in range(lo1, -lo1 + 1):
            cy = cell[i, 1] + dy
            if box[1] > 0:
                cy = cy % ncell[1]
            elif cy < 0 or cy >= ncell[1]:
                continue
            for dz in range(lo2, -lo2 + 1):
                cz = cell[i, 2] + dz
                if box[2] > 0:
                    cz = cz % ncell[2]
                elif cz < 0 or cz >= ncell[2]:
                    continue
                c = (cx * ncell[1] + cy) * ncell[2] + cz
                for q in range(start[c], start[c + 1]):
                    j = order[q]
                    if j == i:
                        continue
                    d2 = 0.0
                    for k in range(3):
                        dk = pos[i, k] - pos[j, k]
                        if box[k] > 0:
                            dk -= box[k] * np.round(dk / box[k])
                        d2 += dk * dk
                    if d2 < c2:
                        if write:
                            out[cursor] = j
                            cursor += 1
                        n_found += 1
    return n_found


@nb.njit(cache=True)
def _cell_search(pos, cutoff, lo, cellsize, ncell, box):
    """Cell-linked-list pair search on 3-padded positions.

    ``box[k] > 0`` marks a periodic axis of that length.
    Returns CSR offsets and neighbor ids (cell-then-id order).
    """
    n = pos.shape[0]
    cell = np.empty((n, 3), dtype=np.int64)
    flat = np.empty(n, dtype=np.int64)
    for i in range(n):
        for k in range(3):
            c = int(np.floor((pos[i, k] - lo[k]) / cellsize[k]))
            if c < 0:
                c = 0
            if c >= ncell[k]:
                c = ncell[k] - 1
            cell[i, k] = c
        flat[i] = (cell[i, 0] * ncell[1] + cell[i, 1]) * ncell[2] + cell[i, 2]
    ncells = ncell[0] * ncell[1] * ncell[2]
    start = np.zeros(ncells + 1, dtype=np.int64)
    for i in range(n):
        start[flat[i] + 1] += 1
    for c in range(ncells):
        start[c + 1] += start[c]
    fill = start[:-1].copy()
    order = np.empty(n, dtype=np.int64)
    for i in range(n):
        order[fill[flat[i]]] = i
        fill[flat[i]] += 1

    c2 = cutoff * cutoff
    dummy = np.empty(0, dtype=np.int64)
    offsets = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        offsets[i + 1] = offsets[i] + _scan(i, pos, cell, ncell, box, start, order, c2, dummy, 0, False)
    nbr = np.empty(offsets[n], dtype=np.int64)
    for i in range(n):
        _scan(i, pos, cell, ncell, box, start, order, c2, nbr, offsets[i], True)
    return offsets, nbr


def find_pairs(positions, cutoff, box=None):
    """Return ``(offsets, indices)`` of all pairs closer than ``cutoff``.

    ``box`` optionally gives periodic lengths per axis (0 = not periodic);
    periodic axes must span at least three cells.
    """
    pos = np.asarray(positions, dtype=float)
    n, d = pos.shape if pos.ndim == 2 else (0, 1)
    if n == 0:
        return np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    p3 = np.zeros((n, 3))
    p3[:, :d] = pos
    b3 = np.zeros(3)
    if box is not None:
        b3[:d] = np.asarray(box, dtype=float)
    lo = p3.min(axis=0)
    hi = p3.max(axis=0)
    ncell = np.ones(3, dtype=np.int64)
    cellsize = np.full(3, float(cutoff))
    for k in range(d):
        if b3[k] > 0:
            lo[k] = 0.0
            ncell[k] = int(np.floor(b3[k] / cutoff))
            if ncell[k] < 3:
                raise ValueError("periodic box must span at least three cutoff lengths")
            cellsize[k] = b3[k] / ncell[k]
            p3[:, k] = np.mod(p3[:, k], b3[k])
        else:
            ncell[k] = max(1, int(np.floor((hi[k] - lo[k]) / cutoff)) + 1)
    return _cell_search(p3, float(cutoff), lo, cellsize, ncell, b3)


def pair_geometry(positions, offsets, indices, box=None):
    """Distances and unit vectors (owner minus neighbor) for a CSR pair set."""
    owners = np.repeat(np.arange(len(offsets) - 1), np.diff(offsets))
    dvec = positions[owners] - positions[indices]
    if box is not None:
        b = np.asarray(box, dtype=float)
        per = b > 0
        dvec[:, per] -= b[per] * np.round(dvec[:, per] / b[per])
    dist = np.sqrt(np.einsum("pk,pk->p", dvec, dvec))
    e = dvec / dist[:, None]
    return dist, e


def build_neighbor_lists(pset: ParticleSet, k: SmoothingKernel) -> NeighborList:
    """Fixed neighbor lists on reference positions with cutoff ``2h``."""
    if pset.count == 0:
        z = np.zeros(0)
        return NeighborList(np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64), z,
                            np.zeros((0, pset.r0.shape[1] if pset.r0.ndim == 2 else 1)), z)
    offsets, idx = find_pairs(pset.r0, k.cutoff)
    dist, e = pair_geometry(pset.r0, offsets, idx)
    dW = np.asarray(kernel_gradient_scalar(dist, k), dtype=float)
    return NeighborList(offsets, idx, dist, np.ascontiguousarray(e), dW)


def moment_matrices(pset: ParticleSet, nl: NeighborList) -> np.ndarray:
    """``sum_j V_j (r0_j - r0_i) (x) grad_i W_ij`` per particle."""
    owners = nl.owners()
    # r0_j - r0_i = -dist * e
    w = -pset.V[nl.indices] * nl.dist * nl.dW
    outer = w[:, None, None] * nl.e[:, :, None] * nl.e[:, None, :]
    d = pset.dim
    M = np.zeros((pset.count, d, d))
    np.add.at(M, owners, outer)
    return M


def compute_correction_matrices(pset: ParticleSet, nl: NeighborList, k: SmoothingKernel | None = None):
    """Inverse kernel moment matrices ``B0``, one per particle.

    Raises
    ------
    SingularMomentError
        For the first particle whose neighborhood cannot span all dimensions.
    """
    M = moment_matrices(pset, nl)
    d = pset.dim
    scale = np.abs(M).max(axis=(1, 2)) if len(M) else np.zeros(0)
    det = np.linalg.det(M) if len(M) else np.zeros(0)
    bad = ~(np.abs(det) > 1e-10 * np.maximum(scale, 1e-300) ** d) | (scale == 0)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise SingularMomentError(i, f"{np.diff(nl.offsets)[i]} neighbors")
    return np.linalg.inv(M)
