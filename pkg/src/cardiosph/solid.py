"""Total-Lagrangian SPH solid dynamics.

All spatial operators act on reference positions with the fixed neighbor
lists and correction matrices ``B0``.  Two-dimensional bodies are treated as
plane strain (``C_33 = 1``), so the invariant ``I1`` always carries the
out-of-plane unit stretch and both materials stay stress free at ``F = I``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numba as nb
import numpy as np

from .errors import InvertedElementError
from .kernels import SmoothingKernel, von_mises
from .particles import NeighborList, ParticleSet

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- materials

@dataclass(frozen=True)
class NeoHookeanParams:
    """Compressible Neo-Hookean solid, ``W = mu tr(E) - mu ln J + lam/2 (ln J)^2``."""

    lam: float
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("shear modulus must be positive")
        if not self.bulk > 0:
            raise ValueError("bulk modulus must be positive")

    @classmethod
    def from_young(cls, E: float, nu: float) -> "NeoHookeanParams":
        if not -1.0 < nu < 0.5:
            raise ValueError("Poisson ratio must lie in (-1, 0.5)")
        mu = E / (2.0 * (1.0 + nu))
        lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        return cls(lam=lam, mu=mu)

    @property
    def bulk(self) -> float:
        return self.lam + 2.0 * self.mu / 3.0

    @property
    def E(self) -> float:
        return self.mu * (3 * self.lam + 2 * self.mu) / (self.lam + self.mu)

    @property
    def nu(self) -> float:
        return self.lam / (2.0 * (self.lam + self.mu))

    @property
    def lambda_bulk(self) -> float:
        return self.lam

    @property
    def mu_eff(self) -> float:
        return self.mu

    def pk2(self, F, frame=None):
        return neo_hookean_pk2(F, self)

    def acoustic_modulus(self, F, frame=None):
        """Longitudinal wave modulus; constant ``lambda + 2 mu`` for this law."""
        F = np.asarray(F, dtype=float)
        return np.full(F.shape[:-2], self.lam + 2.0 * self.mu)

    def energy(self, C, frame=None):
        I1, J = _trace_det(C)
        lnJ = np.log(J)
        return 0.5 * self.mu * (I1 - 3.0) - self.mu * lnJ + 0.5 * self.lam * lnJ**2


@dataclass(frozen=True)
class HolzapfelOgdenParams:
    """Holzapfel-Ogden myocardium with a logarithmic volumetric penalty."""

    a: float
    b: float
    a_f: float = 0.0
    b_f: float = 0.0
    a_s: float = 0.0
    b_s: float = 0.0
    a_fs: float = 0.0
    b_fs: float = 0.0
    lambda_bulk: float = 0.0

    def __post_init__(self):
        for name in ("a", "a_f", "a_s", "a_fs", "b", "b_f", "b_s", "b_fs", "lambda_bulk"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.a > 0:
            raise ValueError("a must be positive")

    @classmethod
    def cantilever(cls, fiber_ratio: float = 0.0, lambda_bulk: float | None = None):
        """Exponential rubber of the bending-column benchmark; ``a_f = ratio * a``.

        ``lambda_bulk`` defaults to the Lame constant of the matching
        Neo-Hookean solid (E = 1.7e7 Pa, nu = 0.45).
        """
        if lambda_bulk is None:
            lambda_bulk = NeoHookeanParams.from_young(1.7e7, 0.45).lam
        a = 5.86e6
        return cls(a=a, b=1.0, a_f=fiber_ratio * a, lambda_bulk=lambda_bulk)

    @classmethod
    def myocardium(cls, isotropic: bool = False, lambda_bulk: float = 1.0):
        """Passive myocardium (stress unit kPa); ``isotropic`` drops the fiber terms."""
        if isotropic:
            return cls(a=0.059, b=8.023, lambda_bulk=lambda_bulk)
        return cls(a=0.059, b=8.023, a_f=18.472, b_f=16.026, a_s=2.841, b_s=11.12,
                   a_fs=0.216, b_fs=11.436, lambda_bulk=lambda_bulk)

    @property
    def mu_eff(self) -> float:
        return self.a + 2.0 * max(self.a_f, self.a_s)

    @property
    def anisotropic(self) -> bool:
        return self.a_f > 0 or self.a_s > 0 or self.a_fs > 0

    def pk2(self, F, frame=None):
        return holzapfel_ogden_pk2(F, frame, self)

    def acoustic_modulus(self, F, frame=None):
        """Upper estimate of the acoustic stiffness at the current strain.

        Bounds the second derivative of each energy term along rank-one
        directions; reduces to ``lambda + 2 a (1 + b)`` at ``F = I`` for the
        isotropic part, so exponential stiffening tightens the time step.
        """
        F = np.asarray(F, dtype=float)
        C = np.swapaxes(F, -1, -2) @ F
        d = C.shape[-1]
        I1 = np.trace(C, axis1=-2, axis2=-1) + (3 - d)
        cmax = np.linalg.eigvalsh(C)[..., -1]
        M = self.lambda_bulk + self.a + self.a * np.exp(self.b * (I1 - 3.0)) * (1.0 + 2.0 * self.b * cmax)
        if self.anisotropic:
            f, s = _frame_vectors(frame, d, C.shape[:-2])
            Ff = np.einsum("...ab,...b->...a", F, np.broadcast_to(f, F.shape[:-1]))
            Fs = np.einsum("...ab,...b->...a", F, np.broadcast_to(s, F.shape[:-1]))
            for af, bf, v in ((self.a_f, self.b_f, Ff), (self.a_s, self.b_s, Fs)):
                if af > 0:
                    I4 = np.einsum("...a,...a->...", v, v)
                    g = np.exp(bf * (I4 - 1.0) ** 2)
                    M = M + af * g * (4.0 * I4 * (1.0 + 2.0 * bf * (I4 - 1.0) ** 2) + 2.0 * np.abs(I4 - 1.0))
            if self.a_fs > 0:
                I8 = np.einsum("...a,...a->...", Ff, Fs)
                g = np.exp(self.b_fs * I8**2)
                span = np.linalg.norm(Ff, axis=-1) + np.linalg.norm(Fs, axis=-1)
                M = M + self.a_fs * g * ((1.0 + 2.0 * self.b_fs * I8**2) * span**2 + 2.0 * np.abs(I8))
        return M

    def energy(self, C, frame=None):
        I1, J = _trace_det(C)
        lnJ = np.log(J)
        W = 0.5 * self.a * _expm1_over(self.b, I1 - 3.0) - self.a * lnJ + 0.5 * self.lambda_bulk * lnJ**2
        if self.anisotropic:
            f, s = _frame_vectors(frame, C.shape[-1], C.shape[:-2])
            Iff = np.einsum("...a,...ab,...b->...", f, C, f)
            Iss = np.einsum("...a,...ab,...b->...", s, C, s)
            Ifs = np.einsum("...a,...ab,...b->...", f, C, s)
            W = W + 0.5 * self.a_f * _expm1_over(self.b_f, (Iff - 1.0) ** 2)
            W = W + 0.5 * self.a_s * _expm1_over(self.b_s, (Iss - 1.0) ** 2)
            W = W + 0.5 * self.a_fs * _expm1_over(self.b_fs, Ifs**2)
        return W


def _expm1_over(b, x):
    """``(exp(b x) - 1)/b`` with its ``b -> 0`` limit ``x``."""
    return np.expm1(b * x) / b if b > 0 else np.asarray(x, dtype=float)


def _trace_det(C):
    d = C.shape[-1]
    I1 = np.trace(C, axis1=-2, axis2=-1) + (3 - d)
    detC = np.linalg.det(C)
    if np.any(~(detC > 0)):
        i = int(np.flatnonzero(np.ravel(~(detC > 0)))[0])
        raise InvertedElementError(i, float(np.ravel(detC)[i]))
    return I1, np.sqrt(detC)


@dataclass
class FiberFrame:
    """Per-particle unit fiber ``f0`` and sheet ``s0`` directions."""

    f0: np.ndarray
    s0: np.ndarray

    def __post_init__(self):
        self.f0 = np.atleast_2d(np.asarray(self.f0, dtype=float))
        self.s0 = np.atleast_2d(np.asarray(self.s0, dtype=float))
        if self.f0.shape != self.s0.shape:
            self.f0, self.s0 = np.broadcast_arrays(self.f0, self.s0)
            self.f0, self.s0 = self.f0.copy(), self.s0.copy()
        for name, v in (("f0", self.f0), ("s0", self.s0)):
            if np.any(np.abs(np.linalg.norm(v, axis=-1) - 1.0) > 1e-6):
                raise ValueError(f"{name} must be unit vectors")
        if np.any(np.abs(np.einsum("...a,...a->...", self.f0, self.s0)) > 1e-6):
            raise ValueError("f0 and s0 must be orthogonal")

    @classmethod
    def uniform(cls, f0, s0, n: int) -> "FiberFrame":
        f0 = np.asarray(f0, dtype=float)
        s0 = np.asarray(s0, dtype=float)
        return cls(np.tile(f0, (n, 1)), np.tile(s0, (n, 1)))

    @property
    def n0(self) -> np.ndarray:
        if self.f0.shape[-1] != 3:
            raise ValueError("normal direction needs 3D fibers")
        return np.cross(self.f0, self.s0)


def _frame_vectors(frame, d, batch):
    if frame is None:
        raise ValueError("anisotropic material needs a fiber frame")
    f = np.asarray(frame.f0 if isinstance(frame, FiberFrame) else frame[0], dtype=float)
    s = np.asarray(frame.s0 if isinstance(frame, FiberFrame) else frame[1], dtype=float)
    if len(batch) == 0:
        f, s = f.reshape(-1, d)[0], s.reshape(-1, d)[0]
    return f, s


@nb.njit(cache=True)
def _det_field(F, out):
    n, d, _ = F.shape
    for i in range(n):
        if d == 3:
            out[i] = (F[i, 0, 0] * (F[i, 1, 1] * F[i, 2, 2] - F[i, 1, 2] * F[i, 2, 1])
                      - F[i, 0, 1] * (F[i, 1, 0] * F[i, 2, 2] - F[i, 1, 2] * F[i, 2, 0])
                      + F[i, 0, 2] * (F[i, 1, 0] * F[i, 2, 1] - F[i, 1, 1] * F[i, 2, 0]))
        elif d == 2:
            out[i] = F[i, 0, 0] * F[i, 1, 1] - F[i, 0, 1] * F[i, 1, 0]
        else:
            out[i] = F[i, 0, 0]
    return out


def _check_det(F):
    if F.ndim == 3 and F.shape[0] > 0:
        J = _det_field(np.ascontiguousarray(F), np.empty(F.shape[0]))
    else:
        J = np.linalg.det(F)
    if np.any(~(J > 0)):
        i = int(np.flatnonzero(np.ravel(~(J > 0)))[0])
        raise InvertedElementError(i, float(np.ravel(J)[i]))
    return J


def invariants(F, frame: FiberFrame | None = None):
    """``(I1, I_ff, I_ss, I_fs, J)`` of ``C = F^T F`` (plane strain in 2D)."""
    F = np.asarray(F, dtype=float)
    J = _check_det(F)
    C = np.swapaxes(F, -1, -2) @ F
    I1 = np.trace(C, axis1=-2, axis2=-1) + (3 - F.shape[-1])
    if frame is None:
        one = np.ones_like(J)
        return I1, one, one, np.zeros_like(J), J
    f, s = _frame_vectors(frame, F.shape[-1], F.shape[:-2])
    Iff = np.einsum("...a,...ab,...b->...", f, C, f)
    Iss = np.einsum("...a,...ab,...b->...", s, C, s)
    Ifs = np.einsum("...a,...ab,...b->...", f, C, s)
    return I1, Iff, Iss, Ifs, J


def neo_hookean_pk2(F, p: NeoHookeanParams):
    """``S = mu I + (lam ln J - mu) C^-1``."""
    F = np.asarray(F, dtype=float)
    J = _check_det(F)
    Cinv = np.linalg.inv(np.swapaxes(F, -1, -2) @ F)
    eye = np.eye(F.shape[-1])
    return p.mu * eye + (p.lam * np.log(J) - p.mu)[..., None, None] * Cinv


def holzapfel_ogden_pk2(F, frame: FiberFrame | None, p: HolzapfelOgdenParams):
    """Second Piola-Kirchhoff stress of the penalized Holzapfel-Ogden law."""
    F = np.asarray(F, dtype=float)
    J = _check_det(F)
    d = F.shape[-1]
    C = np.swapaxes(F, -1, -2) @ F
    Cinv = np.linalg.inv(C)
    I1 = np.trace(C, axis1=-2, axis2=-1) + (3 - d)
    S = (p.a * np.exp(p.b * (I1 - 3.0)))[..., None, None] * np.eye(d)
    S = S + (p.lambda_bulk * np.log(J) - p.a)[..., None, None] * Cinv
    if p.anisotropic:
        f, s = _frame_vectors(frame, d, F.shape[:-2])
        ff = f[..., :, None] * f[..., None, :]
        ss = s[..., :, None] * s[..., None, :]
        fs = f[..., :, None] * s[..., None, :]
        Iff = np.einsum("...a,...ab,...b->...", f, C, f) - 1.0
        Iss = np.einsum("...a,...ab,...b->...", s, C, s) - 1.0
        Ifs = np.einsum("...a,...ab,...b->...", f, C, s)
        S = S + (2 * p.a_f * Iff * np.exp(p.b_f * Iff**2))[..., None, None] * ff
        S = S + (2 * p.a_s * Iss * np.exp(p.b_s * Iss**2))[..., None, None] * ss
        S = S + (p.a_fs * Ifs * np.exp(p.b_fs * Ifs**2))[..., None, None] * (fs + np.swapaxes(fs, -1, -2))
    return S


def active_pk1(Ta, F, f0):
    """Active first Piola-Kirchhoff stress ``Ta F (f0 (x) f0)``."""
    F = np.asarray(F, dtype=float)
    f0 = np.asarray(f0, dtype=float)
    ff = f0[..., :, None] * f0[..., None, :]
    return np.asarray(Ta, dtype=float)[..., None, None] * (F @ ff)


def cauchy_stress(P, F):
    """Push-forward ``sigma = J^-1 P F^T``."""
    J = np.linalg.det(F)
    return (P @ np.swapaxes(F, -1, -2)) / J[..., None, None]


def von_mises_field(P, F):
    return von_mises(cauchy_stress(P, F))


# ------------------------------------------------- compiled stress kernels

NEO_HOOKEAN, HOLZAPFEL_OGDEN = 0, 1


def material_code(material):
    """``(kind, parameter vector)`` consumed by the compiled stress kernel."""
    if isinstance(material, NeoHookeanParams):
        return NEO_HOOKEAN, np.array([material.lam, material.mu])
    if isinstance(material, HolzapfelOgdenParams):
        m = material
        return HOLZAPFEL_OGDEN, np.array([m.a, m.b, m.a_f, m.b_f, m.a_s, m.b_s, m.a_fs, m.b_fs, m.lambda_bulk])
    raise TypeError(f"unsupported material {type(material).__name__}")


@nb.njit(cache=True)
def _det_inv(A, inv):
    d = A.shape[0]
    if d == 2:
        det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
        inv[0, 0] = A[1, 1] / det
        inv[1, 1] = A[0, 0] / det
        inv[0, 1] = -A[0, 1] / det
        inv[1, 0] = -A[1, 0] / det
        return det
    c00 = A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1]
    c01 = A[1, 2] * A[2, 0] - A[1, 0] * A[2, 2]
    c02 = A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0]
    det = A[0, 0] * c00 + A[0, 1] * c01 + A[0, 2] * c02
    inv[0, 0] = c00 / det
    inv[1, 0] = c01 / det
    inv[2, 0] = c02 / det
    inv[0, 1] = (A[0, 2] * A[2, 1] - A[0, 1] * A[2, 2]) / det
    inv[1, 1] = (A[0, 0] * A[2, 2] - A[0, 2] * A[2, 0]) / det
    inv[2, 1] = (A[0, 1] * A[2, 0] - A[0, 0] * A[2, 1]) / det
    inv[0, 2] = (A[0, 1] * A[1, 2] - A[0, 2] * A[1, 1]) / det
    inv[1, 2] = (A[0, 2] * A[1, 0] - A[0, 0] * A[1, 2]) / det
    inv[2, 2] = (A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]) / det
    return det


@nb.njit(cache=True)
def _pk1_field(F, f0, s0, Ta, kind, prm, B0, out):
    """``P_i B0_i`` with ``P = F S + Ta F f0 f0``; returns the first index with
    det F <= 0, or -1."""
    n, d, _ = F.shape
    C = np.empty((d, d))
    Ci = np.empty((d, d))
    S = np.empty((d, d))
    P = np.empty((d, d))
    for i in range(n):
        Fi = F[i]
        J = _det_inv(Fi, Ci)
        if not J > 0.0:
            return i
        for a in range(d):
            for b in range(d):
                acc = 0.0
                for c in range(d):
                    acc += Fi[c, a] * Fi[c, b]
                C[a, b] = acc
        _det_inv(C, Ci)
        lnJ = np.log(J)
        I1 = 3.0 - d
        for a in range(d):
            I1 += C[a, a]
        if kind == 0:
            lam, mu = prm[0], prm[1]
            for a in range(d):
                for b in range(d):
                    S[a, b] = (lam * lnJ - mu) * Ci[a, b]
                S[a, a] += mu
        else:
            ea = prm[0] * np.exp(prm[1] * (I1 - 3.0))
            for a in range(d):
                for b in range(d):
                    S[a, b] = (prm[8] * lnJ - prm[0]) * Ci[a, b]
                S[a, a] += ea
            if prm[2] > 0.0 or prm[4] > 0.0 or prm[6] > 0.0:
                Iff = -1.0
                Iss = -1.0
                Ifs = 0.0
                for a in range(d):
                    for b in range(d):
                        Iff += f0[i, a] * C[a, b] * f0[i, b]
                        Iss += s0[i, a] * C[a, b] * s0[i, b]
                        Ifs += f0[i, a] * C[a, b] * s0[i, b]
                cf = 2.0 * prm[2] * Iff * np.exp(prm[3] * Iff * Iff)
                cs = 2.0 * prm[4] * Iss * np.exp(prm[5] * Iss * Iss)
                cfs = prm[6] * Ifs * np.exp(prm[7] * Ifs * Ifs)
                for a in range(d):
                    for b in range(d):
                        S[a, b] += (cf * f0[i, a] * f0[i, b] + cs * s0[i, a] * s0[i, b]
                                    + cfs * (f0[i, a] * s0[i, b] + s0[i, a] * f0[i, b]))
        ta = Ta[i]
        for a in range(d):
            for b in range(d):
                acc = 0.0
                for c in range(d):
                    acc += Fi[a, c] * (S[c, b] + ta * f0[i, c] * f0[i, b])
                P[a, b] = acc
        for a in range(d):
            for b in range(d):
                acc = 0.0
                for c in range(d):
                    acc += P[a, c] * B0[i, c, b]
                out[i, a, b] = acc
    return -1


# ------------------------------------------------------------ SPH operators

@nb.njit(cache=True)
def _gradient_sum(field, offsets, indices, grad_w, V, B0, out):
    # out_i = [sum_j V_j (f_j - f_i) (x) grad_i W_ij] B0_i
    n, d = field.shape
    G = np.zeros((d, d))
    for i in range(n):
        G[:, :] = 0.0
        for p in range(offsets[i], offsets[i + 1]):
            j = indices[p]
            for a in range(d):
                da = V[j] * (field[j, a] - field[i, a])
                for b in range(d):
                    G[a, b] += da * grad_w[p, b]
        for a in range(d):
            for b in range(d):
                acc = 0.0
                for c in range(d):
                    acc += G[a, c] * B0[i, c, b]
                out[i, a, b] = acc
    return out


@nb.njit(cache=True)
def _pair_gradient3(field, offsets, indices, gB, out):
    # out_i = sum_p (f_j - f_i) (x) gB_p with gB_p = B0_i^T V_j grad_i W_ij
    n = field.shape[0]
    for i in range(n):
        g00 = g01 = g02 = g10 = g11 = g12 = g20 = g21 = g22 = 0.0
        f0 = field[i, 0]
        f1 = field[i, 1]
        f2 = field[i, 2]
        for p in range(offsets[i], offsets[i + 1]):
            j = indices[p]
            d0 = field[j, 0] - f0
            d1 = field[j, 1] - f1
            d2 = field[j, 2] - f2
            b0 = gB[p, 0]
            b1 = gB[p, 1]
            b2 = gB[p, 2]
            g00 += d0 * b0
            g01 += d0 * b1
            g02 += d0 * b2
            g10 += d1 * b0
            g11 += d1 * b1
            g12 += d1 * b2
            g20 += d2 * b0
            g21 += d2 * b1
            g22 += d2 * b2
        out[i, 0, 0] = g00
        out[i, 0, 1] = g01
        out[i, 0, 2] = g02
        out[i, 1, 0] = g10
        out[i, 1, 1] = g11
        out[i, 1, 2] = g12
        out[i, 2, 0] = g20
        out[i, 2, 1] = g21
        out[i, 2, 2] = g22
    return out


@nb.njit(cache=True)
def _pair_gradient(field, offsets, indices, gB, out):
    n, d = field.shape
    for i in range(n):
        for a in range(d):
            for b in range(d):
                out[i, a, b] = 0.0
        for p in range(offsets[i], offsets[i + 1]):
            j = indices[p]
            for a in range(d):
                da = field[j, a] - field[i, a]
                for b in range(d):
                    out[i, a, b] += da * gB[p, b]
    return out


@nb.njit(cache=True)
def _momentum_sum(PB, offsets, indices, grad_w, V, m, out):
    # (1/m_i) sum_j V_i V_j (PB_i + PB_j) grad_i W_ij
    n, d = out.shape
    for i in range(n):
        for a in range(d):
            out[i, a] = 0.0
        for p in range(offsets[i], offsets[i + 1]):
            j = indices[p]
            w = V[i] * V[j]
            for a in range(d):
                acc = 0.0
                for b in range(d):
                    acc += (PB[i, a, b] + PB[j, a, b]) * grad_w[p, b]
                out[i, a] += w * acc
        for a in range(d):
            out[i, a] /= m[i]
    return out


@nb.njit(cache=True)
def _viscous_sum(v, offsets, indices, coef, out):
    n, d = v.shape
    for i in range(n):
        for p in range(offsets[i], offsets[i + 1]):
            j = indices[p]
            for a in range(d):
                out[i, a] += coef[p] * (v[i, a] - v[j, a])
    return out


@nb.njit(cache=True)
def _momentum_sum3(PB, offsets, indices, wg, out):
    # wg_p = V_i V_j grad_i W_ij / m_i
    n = PB.shape[0]
    for i in range(n):
        a0 = a1 = a2 = 0.0
        for p in range(offsets[i], offsets[i + 1]):
            j = indices[p]
            w0 = wg[p, 0]
            w1 = wg[p, 1]
            w2 = wg[p, 2]
            a0 += (PB[i, 0, 0] + PB[j, 0, 0]) * w0 + (PB[i, 0, 1] + PB[j, 0, 1]) * w1 + (PB[i, 0, 2] + PB[j, 0, 2]) * w2
            a1 += (PB[i, 1, 0] + PB[j, 1, 0]) * w0 + (PB[i, 1, 1] + PB[j, 1, 1]) * w1 + (PB[i, 1, 2] + PB[j, 1, 2]) * w2
            a2 += (PB[i, 2, 0] + PB[j, 2, 0]) * w0 + (PB[i, 2, 1] + PB[j, 2, 1]) * w1 + (PB[i, 2, 2] + PB[j, 2, 2]) * w2
        out[i, 0] = a0
        out[i, 1] = a1
        out[i, 2] = a2
    return out


def _grad_w(nl: NeighborList):
    return np.ascontiguousarray(nl.dW[:, None] * nl.e)


def compute_deformation_gradient(u, pset: ParticleSet, nl: NeighborList, B0, grad_w=None):
    """``F_i = [sum_j V_j (u_j - u_i) (x) grad_i W_ij] B0_i + I``."""
    gw = _grad_w(nl) if grad_w is None else grad_w
    u = np.ascontiguousarray(u, dtype=float)
    out = np.empty((len(u), u.shape[1], u.shape[1]))
    _gradient_sum(u, nl.offsets, nl.indices, gw, pset.V, B0, out)
    out += np.eye(u.shape[1])
    return out


def reference_gradient(field, pset: ParticleSet, nl: NeighborList, B0, grad_w=None):
    """Corrected reference gradient of a vector field (no identity added)."""
    gw = _grad_w(nl) if grad_w is None else grad_w
    f = np.ascontiguousarray(field, dtype=float)
    out = np.empty((len(f), f.shape[1], f.shape[1]))
    return _gradient_sum(f, nl.offsets, nl.indices, gw, pset.V, B0, out)


def momentum_rate(P, pset: ParticleSet, nl: NeighborList, B0, grad_w=None):
    """``dv_i/dt = (2/m_i) sum_j V_i V_j 1/2 (P_i B0_i + P_j B0_j) grad_i W_ij``."""
    gw = _grad_w(nl) if grad_w is None else grad_w
    PB = np.ascontiguousarray(P @ B0)
    out = np.empty((len(P), P.shape[-1]))
    return _momentum_sum(PB, nl.offsets, nl.indices, gw, pset.V, pset.m, out)


# ------------------------------------------------------------------- state

@dataclass
class MechState:
    u: np.ndarray
    v: np.ndarray
    F: np.ndarray
    rho: np.ndarray
    dvdt: np.ndarray = field(default=None)

    @classmethod
    def at_rest(cls, pset: ParticleSet, v0=None) -> "MechState":
        n, d = pset.r0.shape
        v = np.zeros((n, d)) if v0 is None else np.broadcast_to(np.asarray(v0, dtype=float), (n, d)).copy()
        return cls(np.zeros((n, d)), v, np.tile(np.eye(d), (n, 1, 1)), pset.rho0.copy(), np.zeros((n, d)))

    def copy(self) -> "MechState":
        return replace(self, u=self.u.copy(), v=self.v.copy(), F=self.F.copy(),
                       rho=self.rho.copy(), dvdt=None if self.dvdt is None else self.dvdt.copy())

    def positions(self, pset: ParticleSet) -> np.ndarray:
        return pset.r0 + self.u


class SolidModel:
    """Material, fibers, supports and precomputed SPH data for one body.

    ``damping`` adds an optional mass-proportional drag ``-damping * v`` and
    ``viscosity`` a velocity-Laplacian term ``(eta/rho0) lap(v)``.  Both are
    zero by default and leave static equilibria unchanged; the viscous term
    damps particle-scale modes that a uniform drag barely touches.
    """

    def __init__(self, pset: ParticleSet, nl: NeighborList, B0, material, frame: FiberFrame | None = None,
                 fixed=None, damping: float = 0.0, viscosity: float = 0.0):
        self.pset = pset
        self.nl = nl
        self.B0 = np.ascontiguousarray(B0)
        self.material = material
        self.frame = frame
        self.grad_w = _grad_w(nl)
        self.fixed = np.zeros(pset.count, dtype=bool) if fixed is None else np.asarray(fixed, dtype=bool)
        if self.fixed.shape != (pset.count,):
            raise ValueError("constraint mask must have one entry per particle")
        self.damping = float(damping)
        self.viscosity = float(viscosity)
        if self.damping < 0 or self.viscosity < 0:
            raise ValueError("damping and viscosity must be non-negative")
        if getattr(material, "anisotropic", False) and frame is None:
            raise ValueError("anisotropic material needs a fiber frame")
        self._kind, self._prm = material_code(material)
        d = pset.dim
        if frame is None:
            self._f0 = np.zeros((pset.count, d))
            self._s0 = np.zeros((pset.count, d))
        else:
            self._f0 = np.ascontiguousarray(np.broadcast_to(frame.f0, (pset.count, d)))
            self._s0 = np.ascontiguousarray(np.broadcast_to(frame.s0, (pset.count, d)))
        self._zero_ta = np.zeros(pset.count)
        owners = nl.owners()
        # per-pair vectors: corrected gradient weights and momentum weights
        self._gB = np.ascontiguousarray(
            np.einsum("pba,pb->pa", self.B0[owners], pset.V[nl.indices][:, None] * self.grad_w))
        self._wg = np.ascontiguousarray(
            (pset.V[owners] * pset.V[nl.indices] / pset.m[owners])[:, None] * self.grad_w)
        # lap(v)_i ~ 2 sum_j V_j (v_i - v_j) dW_ij / r_ij
        self._visc = np.ascontiguousarray(
            2.0 * self.viscosity * pset.V[nl.indices] * nl.dW / nl.dist / pset.rho0[owners])

    def _gradient(self, field):
        f = np.ascontiguousarray(field, dtype=float)
        out = np.empty((len(f), f.shape[1], f.shape[1]))
        if f.shape[1] == 3:
            return _pair_gradient3(f, self.nl.offsets, self.nl.indices, self._gB, out)
        return _pair_gradient(f, self.nl.offsets, self.nl.indices, self._gB, out)

    def stress(self, F, Ta=None):
        """First Piola-Kirchhoff stress ``F S`` plus the active fiber part."""
        P = F @ self.material.pk2(F, self.frame)
        if Ta is not None and np.any(Ta != 0):
            if self.frame is None:
                raise ValueError("active stress needs a fiber frame")
            P = P + active_pk1(Ta, F, self.frame.f0)
        return P

    def acceleration(self, F, Ta=None, v=None):
        """Momentum rate of the current stress state (compiled path)."""
        if Ta is None:
            Ta = self._zero_ta
        elif self.frame is None and np.any(Ta != 0):
            raise ValueError("active stress needs a fiber frame")
        F = np.ascontiguousarray(F)
        PB = np.empty_like(F)
        bad = _pk1_field(F, self._f0, self._s0, np.ascontiguousarray(Ta, dtype=float),
                         self._kind, self._prm, self.B0, PB)
        if bad >= 0:
            raise InvertedElementError(int(bad), float(np.linalg.det(F[bad])))
        a = np.empty((len(F), F.shape[-1]))
        if F.shape[-1] == 3:
            _momentum_sum3(PB, self.nl.offsets, self.nl.indices, self._wg, a)
        else:
            _momentum_sum(PB, self.nl.offsets, self.nl.indices, self.grad_w, self.pset.V, self.pset.m, a)
        if v is not None:
            if self.damping:
                a -= self.damping * v
            if self.viscosity:
                _viscous_sum(np.ascontiguousarray(v), self.nl.offsets, self.nl.indices, self._visc, a)
        a[self.fixed] = 0.0
        return a

    def deformation_rate(self, v):
        """``dF/dt``: corrected reference gradient of the velocity."""
        return self._gradient(v)

    def deformation_gradient(self, u):
        F = self._gradient(u)
        F += np.eye(u.shape[1])
        return F

    def elastic_energy(self, F) -> float:
        C = np.swapaxes(F, -1, -2) @ F
        return float(np.sum(self.pset.V * self.material.energy(C, self.frame)))

    def kinetic_energy(self, v) -> float:
        return float(0.5 * np.sum(self.pset.m * np.einsum("na,na->n", v, v)))


def verlet_step(state: MechState, dt: float, model: SolidModel, Ta=None) -> MechState:
    """Position-based Verlet: half update of F/rho/r, velocity kick with the
    midpoint stress, second half update with the new velocity."""
    s = state.copy()
    s.F = s.F + 0.5 * dt * model.deformation_rate(s.v)
    s.rho = model.pset.rho0 / _check_det(s.F)
    s.u = s.u + 0.5 * dt * s.v
    s.dvdt = model.acceleration(s.F, Ta, s.v)
    s.v = s.v + dt * s.dvdt
    s.F = s.F + 0.5 * dt * model.deformation_rate(s.v)
    s.rho = model.pset.rho0 / _check_det(s.F)
    s.u = s.u + 0.5 * dt * s.v
    return apply_constraints(s, model.fixed)


def apply_constraints(state: MechState, fixed) -> MechState:
    """Pin the masked particles at their reference positions with zero velocity."""
    fixed = np.asarray(fixed, dtype=bool)
    if not fixed.any():
        return state
    state.u[fixed] = 0.0
    state.v[fixed] = 0.0
    return state


def constraint_mask(pset: ParticleSet, predicate) -> np.ndarray:
    """Boolean mask from a predicate on reference positions; warns when empty."""
    mask = np.asarray(predicate(pset.r0), dtype=bool)
    if mask.shape != (pset.count,):
        raise ValueError("constraint predicate must return one flag per particle")
    if not mask.any():
        log.warning("constraint region selects no particles")
    return mask


def sound_speed(material, rho0: float) -> float:
    return float(np.sqrt((material.lambda_bulk + 2.0 * material.mu_eff) / rho0))


def timestep_mechanics(state: MechState, material, k: SmoothingKernel, rho0: float,
                       tangent: bool = False, frame=None, Ta=None) -> float:
    """``0.6 min(h/(c + |v|max), sqrt(h/|dv/dt|max))``.

    By default ``c`` is the reference sound speed.  ``tangent=True`` raises it
    to the stiffest current acoustic modulus (plus ``|Ta|``), which exponential
    laws need once they are strongly stretched.
    """
    c = sound_speed(material, rho0)
    if tangent:
        M = material.acoustic_modulus(state.F, frame)
        if Ta is not None:
            M = M + np.abs(np.asarray(Ta, dtype=float))
        rho = float(np.min(rho0))
        c = max(c, float(np.sqrt(np.max(M) / rho)))
    vmax = float(np.sqrt(np.einsum("na,na->n", state.v, state.v).max())) if len(state.v) else 0.0
    dt = k.h / (c + vmax)
    if state.dvdt is not None and len(state.dvdt):
        amax = float(np.sqrt(np.einsum("na,na->n", state.dvdt, state.dvdt).max()))
        if amax > 0:
            dt = min(dt, np.sqrt(k.h / amax))
    return 0.6 * dt
