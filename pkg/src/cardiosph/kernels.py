"""Wendland smoothing kernel and the small dense linear algebra used everywhere.

Everything here works on plain numpy arrays.  Matrix helpers accept either a
single ``(d, d)`` matrix or a stack ``(n, d, d)`` and loop over the (at most
three) matrix dimensions so that the per-particle batch stays vectorized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DecompositionError, SingularMatrixError

#: smoothing length over particle spacing used by every benchmark
H_OVER_DP = 1.3

_SIGMA = {
    1: lambda h: 3.0 / (4.0 * h),
    2: lambda h: 7.0 / (4.0 * math.pi * h**2),
    3: lambda h: 21.0 / (16.0 * math.pi * h**3),
}


@dataclass(frozen=True)
class SmoothingKernel:
    """Wendland C2 kernel ``W(q) = sigma_d (1 - q/2)^4 (2q + 1)``, ``q = r/h``.

    Support radius is ``2h``.
    """

    h: float
    dim: int
    dp: float | None = None

    def __post_init__(self):
        if self.dim not in _SIGMA:
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dim}")
        if not self.h > 0:
            raise ValueError("smoothing length must be positive")

    @classmethod
    def from_spacing(cls, dp: float, dim: int, ratio: float = H_OVER_DP) -> "SmoothingKernel":
        return cls(h=ratio * dp, dim=dim, dp=dp)

    @property
    def cutoff(self) -> float:
        return 2.0 * self.h

    @property
    def sigma(self) -> float:
        return _SIGMA[self.dim](self.h)

    def value(self, r):
        return kernel_value(r, self)

    def gradient(self, r):
        return kernel_gradient_scalar(r, self)


def _check_radius(r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("kernel evaluated at negative distance")
    return r


def kernel_value(r, k: SmoothingKernel):
    """Kernel value at distance(s) ``r``; zero beyond ``2h``."""
    r = _check_radius(r)
    q = r / k.h
    s = np.clip(1.0 - 0.5 * q, 0.0, None)
    w = k.sigma * s**4 * (2.0 * q + 1.0)
    return w if w.ndim else float(w)


def kernel_gradient_scalar(r, k: SmoothingKernel):
    """Radial derivative dW/dr, ``-5 q sigma/h (1 - q/2)^3``; never positive."""
    r = _check_radius(r)
    q = r / k.h
    s = np.clip(1.0 - 0.5 * q, 0.0, None)
    g = -5.0 * q * k.sigma / k.h * s**3
    return g if g.ndim else float(g)


def cholesky_lower(D, particle_offset: int = 0):
    """Lower Cholesky factor of one SPD matrix or a stack of them.

    Raises
    ------
    DecompositionError
        On a non-positive pivot.  For stacks the offending index (plus
        ``particle_offset``) is reported.
    """
    A = np.asarray(D, dtype=float)
    single = A.ndim == 2
    if single:
        A = A[None]
    n, d, _ = A.shape
    if not np.allclose(A, np.swapaxes(A, 1, 2), rtol=1e-12, atol=1e-14 * np.abs(A).max(initial=1.0)):
        bad = int(np.argmax(np.abs(A - np.swapaxes(A, 1, 2)).reshape(n, -1).max(axis=1)))
        raise DecompositionError("matrix is not symmetric", None if single else bad + particle_offset)
    L = np.zeros_like(A)
    for j in range(d):
        pivot = A[:, j, j] - np.einsum("nk,nk->n", L[:, j, :j], L[:, j, :j])
        if np.any(~(pivot > 0)):
            bad = int(np.flatnonzero(~(pivot > 0))[0])
            raise DecompositionError(
                f"non-positive pivot {pivot[bad]:.3g} in column {j}",
                None if single else bad + particle_offset,
            )
        L[:, j, j] = np.sqrt(pivot)
        for i in range(j + 1, d):
            s = A[:, i, j] - np.einsum("nk,nk->n", L[:, i, :j], L[:, j, :j])
            L[:, i, j] = s / L[:, j, j]
    return L[0] if single else L


def invert_lower_triangular(L):
    """Inverse of a lower-triangular matrix (or stack) by forward substitution."""
    A = np.asarray(L, dtype=float)
    single = A.ndim == 2
    if single:
        A = A[None]
    n, d, _ = A.shape
    diag = np.diagonal(A, axis1=1, axis2=2)
    if np.any(diag == 0):
        raise SingularMatrixError("lower-triangular matrix has a zero diagonal entry")
    X = np.zeros_like(A)
    for i in range(d):
        X[:, i, i] = 1.0 / A[:, i, i]
        for j in range(i):
            s = np.einsum("nk,nk->n", A[:, i, j:i], X[:, j:i, j])
            X[:, i, j] = -s / A[:, i, i]
    return X[0] if single else X


def von_mises(sigma):
    """Von Mises equivalent stress of a symmetric 1x1/2x2/3x3 tensor (or stack).

    2D tensors are treated as plane stress (zero out-of-plane components).
    """
    S = np.asarray(sigma, dtype=float)
    d = S.shape[-1]
    if d < 3:
        full = np.zeros(S.shape[:-2] + (3, 3))
        full[..., :d, :d] = S
        S = full
    dev = S - np.trace(S, axis1=-2, axis2=-1)[..., None, None] * np.eye(3) / 3.0
    vm = np.sqrt(np.maximum(1.5 * np.einsum("...ij,...ij->...", dev, dev), 0.0))
    return vm if vm.ndim else float(vm)
