"""Ionic models, the quasi-steady-state integrator and reaction splitting.

Every ODE is written as ``dy/dt = q - p*y`` (production ``q``, loss rate
``p``) with ``q`` and ``p`` frozen at the start of a sub-step; the QSS update
then integrates that linear ODE exactly.  All functions are pointwise and work
on scalars or per-particle arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ModelDomainError


def qss_step(y, q, p, dt):
    """Exact solution of ``dy/dt = q - p*y`` over ``dt`` with frozen q, p.

    Falls back to the first-order series when ``|p*dt| < 1e-8``.
    """
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    pdt = p * dt
    small = np.abs(pdt) < 1e-8
    safe_p = np.where(small, 1.0, p)
    decay = np.exp(-np.where(small, 0.0, pdt))
    exact = y * decay + q / safe_p * (1.0 - decay)
    out = np.where(small, y + (q - p * y) * dt, exact)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class AlievPanfilovParams:
    k: float = 8.0
    a: float = 0.15
    b: float = 0.15
    eps0: float = 0.002
    mu1: float = 0.2
    mu2: float = 0.3

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("k must be positive")
        if not 0 < self.a < 1:
            raise ValueError("a must lie in (0, 1)")
        if not self.mu2 > 0:
            raise ValueError("mu2 must be positive")

    @classmethod
    def tissue_2d(cls):
        """Parameters of the 2D pulse benchmark (a = 0.15)."""
        return cls()

    @classmethod
    def biventricle(cls):
        """Parameters of the heart runs (a = 0.01)."""
        return cls(a=0.01)


@dataclass(frozen=True)
class FitzHughNagumoParams:
    a: float = 0.1
    eps0: float = 0.01
    beta: float = 0.5
    gamma: float = 1.0
    sigma: float = 0.0

    def __post_init__(self):
        if not 0 < self.a < 1:
            raise ValueError("a must lie in (0, 1)")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")


class AlievPanfilov:
    name = "aliev_panfilov"

    def __init__(self, params: AlievPanfilovParams | None = None):
        self.params = params or AlievPanfilovParams()

    def epsilon(self, V, w):
        p = self.params
        V = np.asarray(V, dtype=float)
        if np.any(V + p.mu2 <= 0):
            raise ModelDomainError(f"Aliev-Panfilov rate evaluated at V <= -mu2 = {-p.mu2}")
        return p.eps0 + p.mu1 * w / (p.mu2 + V)

    def rates(self, V, w, Cm=1.0):
        p = self.params
        dV = (-p.k * V * (V - p.a) * (V - 1.0) - w * V) / Cm
        dw = self.epsilon(V, w) * (-p.k * V * (V - p.b - 1.0) - w)
        return dV, dw

    def v_terms(self, V, w):
        # -kV(V-a)(V-1) - wV = k(1+a)V^2 - (kV^2 + ka + w) V
        p = self.params
        return p.k * (1.0 + p.a) * V * V, p.k * V * V + p.k * p.a + w

    def w_terms(self, V, w):
        p = self.params
        eps = self.epsilon(V, w)
        return eps * p.k * V * (p.b + 1.0 - V), eps


class FitzHughNagumo:
    name = "fitzhugh_nagumo"

    def __init__(self, params: FitzHughNagumoParams | None = None):
        self.params = params or FitzHughNagumoParams()

    def rates(self, V, w, Cm=1.0):
        p = self.params
        dV = (-V * (V - p.a) * (V - 1.0) - w) / Cm
        dw = p.eps0 * (p.beta * V - p.gamma * w - p.sigma)
        return dV, dw

    def v_terms(self, V, w):
        # -V(V-a)(V-1) - w = (1+a)V^2 - w - (V^2 + a) V
        p = self.params
        return (1.0 + p.a) * V * V - w, V * V + p.a

    def w_terms(self, V, w):
        p = self.params
        q = p.eps0 * (p.beta * np.asarray(V, dtype=float) - p.sigma)
        return q, np.full_like(q, p.eps0 * p.gamma)


def make_model(name: str, **params):
    """Build an ionic model from its config name."""
    key = name.lower().replace("-", "_")
    if key in ("aliev_panfilov", "ap"):
        return AlievPanfilov(AlievPanfilovParams(**params))
    if key in ("fitzhugh_nagumo", "fhn"):
        return FitzHughNagumo(FitzHughNagumoParams(**params))
    raise ValueError(f"unknown ionic model {name!r}")


@dataclass
class ElectroState:
    """Per-particle transmembrane potential, gating variable, active tension."""

    V: np.ndarray
    w: np.ndarray
    Ta: np.ndarray = field(default=None)
    Cm: float = 1.0

    def __post_init__(self):
        self.V = np.array(self.V, dtype=float, ndmin=1)
        self.w = np.broadcast_to(np.asarray(self.w, dtype=float), self.V.shape).copy()
        if self.Ta is None:
            self.Ta = np.zeros_like(self.V)
        else:
            self.Ta = np.broadcast_to(np.asarray(self.Ta, dtype=float), self.V.shape).copy()

    def copy(self) -> "ElectroState":
        return replace(self, V=self.V.copy(), w=self.w.copy(), Ta=self.Ta.copy())


def react_v(V, w, dt, model, Cm=1.0):
    q, p = model.v_terms(V, w)
    return qss_step(V, q / Cm, p / Cm, dt)


def react_w(V, w, dt, model):
    q, p = model.w_terms(V, w)
    return qss_step(w, q, p, dt)


def reaction_half_step(state: ElectroState, dt: float, model, order: str = "forward") -> ElectroState:
    """Advance the reactions by ``dt/2``.

    ``forward`` integrates the potential reaction then the gating reaction,
    ``backward`` the reverse; a forward half followed by a backward half is
    one symmetric (Strang) reaction step of length ``dt``.
    """
    out = state.copy()
    if dt == 0:
        return out
    if dt < 0:
        raise ValueError("time step must be non-negative")
    half = 0.5 * dt
    if order == "forward":
        out.V = react_v(out.V, out.w, half, model, out.Cm)
        out.w = react_w(out.V, out.w, half, model)
    elif order == "backward":
        out.w = react_w(out.V, out.w, half, model)
        out.V = react_v(out.V, out.w, half, model, out.Cm)
    else:
        raise ValueError(f"order must be 'forward' or 'backward', got {order!r}")
    return out


def strang_reaction_step(state: ElectroState, dt: float, model) -> ElectroState:
    return reaction_half_step(reaction_half_step(state, dt, model, "forward"), dt, model, "backward")


@dataclass(frozen=True)
class ActiveStressParams:
    """Activation-gated tension ODE.  Only ``k_a`` is expected to vary by scene;
    the rate constants are generic placeholders."""

    k_a: float = 1.0
    V_r: float = 0.0
    eps0: float = 0.1
    eps_inf: float = 1.0
    eps_minus_inf: float = 0.1
    xi: float = 1.0
    V_bar: float = 0.0

    def __post_init__(self):
        if min(self.eps0, self.eps_inf, self.eps_minus_inf) <= 0:
            raise ValueError("activation rates must be positive")

    def rate(self, V):
        V = np.asarray(V, dtype=float)
        return self.eps0 + (self.eps_inf - self.eps_minus_inf) * np.exp(-np.exp(-self.xi * (V - self.V_bar)))


def active_stress_step(Ta, V, dt, p: ActiveStressParams):
    """``dTa/dt = eps(V) [k_a (V - V_r) - Ta]`` with V frozen (exact update)."""
    eps = p.rate(V)
    return qss_step(Ta, eps * p.k_a * (np.asarray(V) - p.V_r), eps, dt)


def to_physical(V, t):
    """Map dimensionless potential/time to (mV, ms)."""
    return 100.0 * np.asarray(V) - 80.0, 12.9 * np.asarray(t)


def rk4_reference(model, V0, w0, dt, t_end, Cm=1.0):
    """Classical RK4 trajectory of the full (unsplit) ionic ODE; used as oracle."""
    n = int(round(t_end / dt))
    out = np.empty((n + 1, 2))
    y = np.array([V0, w0], dtype=float)
    out[0] = y

    def f(y):
        dV, dw = model.rates(y[0], y[1], Cm)
        return np.array([dV, dw], dtype=float)

    for i in range(n):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = y
    return out
