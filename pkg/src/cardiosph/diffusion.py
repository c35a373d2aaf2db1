"""Anisotropic SPH diffusion on fixed reference neighbor lists.

The operator is the Brookshaw-type pairwise form

    dphi_i/dt = 2/C_m sum_j V_j (phi_i - phi_j) c_ij kappa_ij (1/r_ij) dW/dr,

with a directional conductivity ``kappa_ij = 1/|M_ij e_ij|^2`` built from
per-particle inverse Cholesky factors (``M_ij`` = mean of the two factors)
and an optional directional kernel correction ``c_ij = e_ij . B_ij e_ij``.

A purely directional weight smooths the anisotropy out: with an isotropic
kernel its continuum limit is a tensor less anisotropic than the one that was
factored.  ``compensate_anisotropy`` pre-distorts each tensor so that the
continuum limit of the discrete operator is the requested tensor; it leaves
isotropic tensors unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numba as nb
import numpy as np

from .errors import DecompositionError
from .kernels import cholesky_lower, invert_lower_triangular
from .particles import NeighborList, ParticleSet

VARIANTS = ("mean_factor", "pair_cholesky")


def assemble_conductivity(d_iso, d_ani, f0=None, dim=None):
    """``D = d_iso I + d_ani f0 (x) f0`` for one fiber or an ``(n, d)`` array."""
    if f0 is None:
        if d_ani != 0:
            raise ValueError("a fiber direction is required when d_ani != 0")
        if dim is None:
            raise ValueError("dim is required without a fiber direction")
        return d_iso * np.eye(dim)
    f = np.asarray(f0, dtype=float)
    norms = np.linalg.norm(f, axis=-1)
    if d_ani != 0 and np.any(np.abs(norms - 1.0) > 1e-8):
        raise ValueError("fiber direction must be a unit vector")
    d = f.shape[-1]
    return d_iso * np.eye(d) + d_ani * f[..., :, None] * f[..., None, :]


@lru_cache(maxsize=8)
def _sphere_rule(dim: int):
    """Quadrature nodes/weights on the unit sphere (weights sum to one)."""
    if dim == 1:
        return np.array([[1.0], [-1.0]]), np.array([0.5, 0.5])
    if dim == 2:
        n = 720
        t = 2 * np.pi * np.arange(n) / n
        return np.stack([np.cos(t), np.sin(t)], axis=1), np.full(n, 1.0 / n)
    mu, wmu = np.polynomial.legendre.leggauss(96)
    nphi = 192
    phi = 2 * np.pi * np.arange(nphi) / nphi
    s = np.sqrt(1 - mu**2)
    e = np.stack([np.outer(s, np.cos(phi)).ravel(), np.outer(s, np.sin(phi)).ravel(),
                  np.repeat(mu, nphi)], axis=1)
    return e, np.repeat(wmu, nphi) / (2.0 * nphi)


def _spd_log(A):
    lam, Q = np.linalg.eigh(A)
    return (Q * np.log(lam)) @ Q.T


def _spd_exp(A):
    lam, Q = np.linalg.eigh(0.5 * (A + A.T))
    return (Q * np.exp(lam)) @ Q.T


@dataclass(frozen=True)
class Stencil:
    """Pair directions ``e`` with non-negative weights ``w`` describing how an
    operator samples directions.

    ``effective(Dt)`` is the second moment ``sum_p w_p kappa_p e_p (x) e_p``
    with ``kappa_p = 1/(e_p . Dt^-1 e_p)``: the tensor the discrete operator
    actually applies to quadratic fields when ``Dt`` is factored.  Weights are
    scaled so that ``effective(I)`` has unit mean eigenvalue.
    """

    e: np.ndarray
    w: np.ndarray
    isotropic: bool = False

    @classmethod
    def continuum(cls, dim: int) -> "Stencil":
        e, w = _sphere_rule(dim)
        return cls(e, w * dim, isotropic=True)

    @classmethod
    def from_particles(cls, pset: ParticleSet, nl: NeighborList, max_particles: int = 64) -> "Stencil":
        """Pool the neighborhoods of (up to ``max_particles``) particles with
        complete support, i.e. at least 90% of the largest neighbor count."""
        counts = np.diff(nl.offsets)
        full = np.flatnonzero(counts >= 0.9 * counts.max())
        if len(full) > max_particles:
            full = full[np.linspace(0, len(full) - 1, max_particles).astype(int)]
        sel = np.concatenate([np.arange(nl.offsets[i], nl.offsets[i + 1]) for i in full])
        w = -pset.V[nl.indices[sel]] * nl.dW[sel] * nl.dist[sel]
        e = nl.e[sel]
        d = e.shape[1]
        w = w * d / np.einsum("p,pa,pa->", w, e, e)
        return cls(np.ascontiguousarray(e), w)

    def moment(self) -> np.ndarray:
        return np.einsum("p,pa,pb->ab", self.w, self.e, self.e)

    def effective(self, Dt) -> np.ndarray:
        kappa = 1.0 / np.einsum("pa,ab,pb->p", self.e, np.linalg.inv(Dt), self.e)
        return np.einsum("p,pa,pb->ab", self.w * kappa, self.e, self.e)

    def solve(self, D, tol=1e-12, max_iter=300) -> np.ndarray:
        """Tensor ``Dt`` with ``effective(Dt) = P^1/2 D P^1/2`` (``P`` = stencil
        moment), so isotropic tensors map to themselves.  Log-space fixed
        point; keeps every iterate SPD."""
        D = np.asarray(D, dtype=float)
        P = self.moment()
        lamP, QP = np.linalg.eigh(P)
        Ph = (QP * np.sqrt(lamP)) @ QP.T
        logT = _spd_log(Ph @ D @ Ph)
        X = D.copy()
        for _ in range(max_iter):
            step = logT - _spd_log(self.effective(X))
            X = _spd_exp(_spd_log(X) + step)
            if np.abs(step).max() < tol:
                break
        return X


def effective_tensor(D, stencil: "Stencil | None" = None):
    """Tensor actually applied by the directional-weight operator when ``D``
    is factored (continuum-limit stencil by default)."""
    D = np.asarray(D, dtype=float)
    st = stencil or Stencil.continuum(D.shape[-1])
    return st.effective(D)


@lru_cache(maxsize=256)
def _continuum_ratio(key):
    st = Stencil.continuum(len(key))
    return tuple(np.diag(st.solve(np.diag(key))))


def compensate_anisotropy(D, stencil: "Stencil | None" = None):
    """Tensor(s) whose directional-weight operator reproduces ``D``.

    With the continuum stencil the map is rotation covariant and is solved
    once per eigenvalue ratio; with a particle stencil it is solved once per
    distinct tensor.  Accepts ``(d, d)`` or ``(n, d, d)``.
    """
    A = np.asarray(D, dtype=float)
    single = A.ndim == 2
    if single:
        A = A[None]
    lam, Q = np.linalg.eigh(A)
    if np.any(lam <= 0):
        raise DecompositionError("conductivity tensor is not positive definite",
                                 int(np.flatnonzero((lam <= 0).any(axis=1))[0]))
    out = np.empty_like(A)
    if stencil is None or stencil.isotropic:
        keys = np.round(lam / lam.max(axis=1, keepdims=True), 12)
        for key in np.unique(keys, axis=0):
            rows = np.flatnonzero((keys == key).all(axis=1))
            ratio = np.array(_continuum_ratio(tuple(key.tolist())))
            for i in rows:
                out[i] = (Q[i] * (ratio * lam[i].max())) @ Q[i].T
    else:
        keys = np.round(A.reshape(len(A), -1) / np.abs(A).max(), 12)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = np.ravel(inv)
        if len(uniq) > 256:
            raise ValueError(f"{len(uniq)} distinct tensors; use the continuum stencil")
        for u in range(len(uniq)):
            rows = np.flatnonzero(inv == u)
            out[rows] = stencil.solve(A[rows[0]])
    out = 0.5 * (out + np.swapaxes(out, 1, 2))
    return out[0] if single else out


def compensate_anisotropy_2d(D):
    """Closed form of ``compensate_anisotropy`` in two dimensions:
    ``tr(D) / (2 det D) * D @ D``."""
    D = np.asarray(D, dtype=float)
    c = np.trace(D, axis1=-2, axis2=-1) / (2.0 * np.linalg.det(D))
    return c[..., None, None] * (D @ D)


COMPENSATION = ("none", "continuum", "stencil")


@dataclass
class ConductivityModel:
    """Per-particle conductivity tensors and their inverse Cholesky factors.

    ``compensation`` selects how tensors are pre-distorted before factoring:
    ``none`` (factor ``D`` as is), ``continuum`` (isotropic angular sampling,
    suited to irregular particle clouds) or ``stencil`` (calibrated on the
    actual neighborhoods, suited to lattices).
    """

    D: np.ndarray
    compensation: str = "stencil"
    Cm: float = 1.0
    Ltilde: np.ndarray | None = None
    Dfactored: np.ndarray | None = None

    def __post_init__(self):
        if self.compensation not in COMPENSATION:
            raise ValueError(f"compensation must be one of {COMPENSATION}")
        self.D = np.ascontiguousarray(np.asarray(self.D, dtype=float))
        if self.D.ndim != 3:
            raise ValueError("D must be an (n, d, d) stack")
        if not self.Cm > 0:
            raise ValueError("membrane capacitance must be positive")

    @classmethod
    def from_fibers(cls, d_iso, d_ani, f0, **kw):
        return cls(assemble_conductivity(d_iso, d_ani, f0), **kw)

    @classmethod
    def uniform(cls, D, n, **kw):
        D = np.asarray(D, dtype=float)
        return cls(np.broadcast_to(D, (n,) + D.shape).copy(), **kw)

    def max_trace(self) -> float:
        return float(np.trace(self.D, axis1=1, axis2=2).max())


def precompute_factors(model: ConductivityModel, stencil: Stencil | None = None) -> np.ndarray:
    """Inverse lower Cholesky factor of every particle's (compensated) tensor.

    Done once per run; ``stencil`` is required for ``stencil`` compensation.
    """
    if model.compensation == "none":
        Df = model.D
    elif model.compensation == "continuum":
        Df = compensate_anisotropy(model.D)
    else:
        if stencil is None:
            raise ValueError("stencil compensation needs the particle stencil")
        Df = compensate_anisotropy(model.D, stencil)
    model.Dfactored = Df
    model.Ltilde = invert_lower_triangular(cholesky_lower(Df))
    return model.Ltilde


def pairwise_directional_conductivity(Li, Lj, e):
    """``1/|M e|^2`` with ``M = (Li + Lj)/2``; symmetric in (i, j).

    Works on single factors or stacks of pairs.
    """
    M = 0.5 * (np.asarray(Li) + np.asarray(Lj))
    v = np.einsum("...ab,...b->...a", M, np.asarray(e, dtype=float))
    k = 1.0 / np.einsum("...a,...a->...", v, v)
    return k if np.ndim(k) else float(k)


def pair_cholesky_conductivity(Di, Dj, e):
    """Per-pair variant: harmonic-mean tensor ``2 (Di^-1 + Dj^-1)^-1``,
    Cholesky-factored per pair, ``kappa = 1/|L^-1 e|^2``."""
    Di = np.asarray(Di, dtype=float)
    Dj = np.asarray(Dj, dtype=float)
    Dbar = 2.0 * np.linalg.inv(np.linalg.inv(Di) + np.linalg.inv(Dj))
    Dbar = 0.5 * (Dbar + np.swapaxes(Dbar, -1, -2))
    Linv = invert_lower_triangular(cholesky_lower(Dbar))
    v = np.einsum("...ab,...b->...a", Linv, np.asarray(e, dtype=float))
    k = 1.0 / np.einsum("...a,...a->...", v, v)
    return k if np.ndim(k) else float(k)


def pair_coefficients(pset: ParticleSet, nl: NeighborList, model: ConductivityModel,
                      B0=None, variant: str = "mean_factor"):
    """Static per-pair weights ``2 V_j c_ij kappa_ij dW/r / C_m``.

    Neighbor lists are fixed, so these are computed once per run.
    """
    owners = nl.owners()
    j = nl.indices
    if model.Ltilde is None:
        st = Stencil.from_particles(pset, nl) if model.compensation == "stencil" else None
        precompute_factors(model, st)
    if variant == "mean_factor":
        kappa = pairwise_directional_conductivity(model.Ltilde[owners], model.Ltilde[j], nl.e)
    elif variant == "pair_cholesky":
        Df = model.Dfactored
        kappa = pair_cholesky_conductivity(Df[owners], Df[j], nl.e)
    else:
        raise ValueError(f"unknown diffusion variant {variant!r}; choose from {VARIANTS}")
    coef = 2.0 * pset.V[j] * kappa * nl.dW / nl.dist / model.Cm
    if B0 is not None:
        Bbar = 0.5 * (B0[owners] + B0[j])
        coef = coef * np.einsum("pa,pab,pb->p", nl.e, Bbar, nl.e)
    return np.ascontiguousarray(coef)


@nb.njit(cache=True)
def _pair_rate(phi, offsets, indices, coef, out):
    n = offsets.shape[0] - 1
    for i in range(n):
        acc = 0.0
        pi = phi[i]
        for p in range(offsets[i], offsets[i + 1]):
            acc += coef[p] * (pi - phi[indices[p]])
        out[i] = acc
    return out


class DiffusionOperator:
    """Precomputed discrete operator ``phi -> dphi/dt``."""

    def __init__(self, pset: ParticleSet, nl: NeighborList, model: ConductivityModel,
                 B0=None, variant: str = "mean_factor"):
        self.pset = pset
        self.nl = nl
        self.model = model
        self.variant = variant
        self.corrected = B0 is not None
        self.coef = pair_coefficients(pset, nl, model, B0, variant)

    def rate(self, phi, out=None):
        phi = np.ascontiguousarray(phi, dtype=float)
        if out is None:
            out = np.empty_like(phi)
        return _pair_rate(phi, self.nl.offsets, self.nl.indices, self.coef, out)

    def stable_dt(self) -> float:
        """Gershgorin bound on the explicit-Euler step of this operator."""
        diag = np.zeros(self.nl.count)
        np.add.at(diag, self.nl.owners(), -self.coef)
        return float(1.0 / diag.max()) if len(diag) and diag.max() > 0 else np.inf


def diffusion_rate(phi, pset, nl, k, model, B0=None, variant="mean_factor"):
    """One-shot evaluation of the anisotropic SPH diffusion rate.

    ``k`` is accepted for interface symmetry; kernel data are cached in ``nl``.
    """
    return DiffusionOperator(pset, nl, model, B0, variant).rate(phi)


def diffusion_timestep(h: float, dim: int, max_trace: float) -> float:
    """``0.5 h^2 / (d tr(D))``."""
    return 0.5 * h * h / (dim * max_trace)
