"""Additive Heston factor model and its closed-form equilibrium stock price.

State ``Y = (V, X)`` with

    dV = (kappa - lam V) dt + sigma sqrt(V) dW1
    dX = mu dt + sqrt(V) dW2,           W1, W2 independent,

and the stock pays ``S_T = X_T``.  Note that ``kappa`` here is the level term of
the variance drift (long-run variance ``kappa / lam``), not a mean-reversion
speed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .affine_core import BOUNDARY_RADIUS, ComplexExponents, FunctionalCharacteristics, expm1_ratio
from .errors import BoundaryCase, HorizonExceeded, NonRealResult


@dataclass(frozen=True)
class HestonParams:
    mu: float
    kappa: float
    lam: float
    sigma: float
    v0: float = 0.0
    x0: float = 0.0

    def __post_init__(self):
        if not (self.kappa > 0 and self.lam > 0 and self.sigma > 0):
            raise ValueError("kappa, lam and sigma must be positive")
        if self.v0 < 0:
            raise ValueError("v0 must be non-negative")


@dataclass(frozen=True)
class ThetaValue:
    """``theta(gamma) = sqrt(lam^2 - sigma^2 gamma^2)`` and ``d theta / d gamma``."""

    value: complex
    derivative: complex
    branch: str  # "real" or "imaginary"


def theta(params: HestonParams, gamma: float) -> ThetaValue:
    disc = params.lam**2 - params.sigma**2 * gamma**2
    if abs(params.sigma * abs(gamma) - params.lam) < BOUNDARY_RADIUS:
        raise BoundaryCase(f"sigma|gamma| = lam for gamma={gamma}")
    if disc > 0:
        value, branch = complex(np.sqrt(disc)), "real"
    else:
        value, branch = 1j * np.sqrt(-disc), "imaginary"
    # same expression on both branches: d/dg (i sqrt(s^2 g^2 - l^2)) = -s^2 g / (i sqrt(...))
    return ThetaValue(value=value, derivative=-params.sigma**2 * gamma / value, branch=branch)


def max_horizon(params: HestonParams, gamma: float) -> float:
    """Largest horizon for which ``E[exp(-gamma X_T)]`` stays finite."""
    th = theta(params, gamma)
    if th.branch == "real":
        return float("inf")
    w = abs(th.value)
    return 2.0 / w * (np.arctan(w / -params.lam) + np.pi)


def explosion_time(params: HestonParams, u_x: float) -> float:
    """Moment explosion time ``t+(u_x)`` for the transform at ``u = (0, u_x)``.

    The boundary ``|u_x| = lam / sigma`` is the limit of the finite branch,
    which is ``+inf``.
    """
    if abs(abs(u_x) * params.sigma - params.lam) < BOUNDARY_RADIUS:
        return float("inf")
    return max_horizon(params, u_x)


def characteristics(params: HestonParams) -> FunctionalCharacteristics:
    mu, kappa, lam, sigma = params.mu, params.kappa, params.lam, params.sigma

    def F(u):
        return kappa * u[0] + mu * u[1]

    def R(u):
        return np.array([0.5 * sigma**2 * u[0] ** 2 - lam * u[0] + 0.5 * u[1] ** 2, 0.0], dtype=complex)

    return FunctionalCharacteristics(F=F, R=R, dim=2, domain_note="entire; exponents explode at t+(u_x)")


def _theta_c(params: HestonParams, u):
    return np.sqrt(params.lam**2 - params.sigma**2 * u * u + 0j)


def _q_factor(params: HestonParams, s, u, th):
    # q(s) = 2 / ((1 + e^{-th s}) + lam * (1 - e^{-th s}) / th); equals 1 at s = 0
    g = s * expm1_ratio(th * s)
    return 2.0 / ((1.0 + np.exp(-th * s)) + params.lam * g)


def _continuous_log_q(params: HestonParams, t: float, u, th, max_grid: int = 4096):
    """log q(t) on the branch continuous in s along [0, t], starting from log q(0) = 0."""
    n = 16
    while True:
        grid = np.linspace(0.0, t, n + 1)
        q = _q_factor(params, grid.reshape(-1, *([1] * np.ndim(u))), u, th)
        step = np.angle(q[1:] / q[:-1])
        if np.max(np.abs(step), initial=0.0) < np.pi / 4 or n >= max_grid:
            break
        n *= 2
    return np.log(np.abs(q[-1])) + 1j * np.sum(step, axis=0)


def phi_psi(params: HestonParams, t: float, u_x) -> ComplexExponents:
    """Closed-form exponents at ``u = (0, u_x)``; vectorised over complex ``u_x``.

    Uses the ``e^{-theta t}`` form (principal root, ``Re theta >= 0``) and the
    logarithm unwrapped along ``[0, t]``.  At ``theta = 0`` (``|u_x| = lam/sigma``)
    the formulas reduce smoothly to the limit ``psi_1 = u_x^2 t / (2 + lam t)``.
    """
    u = np.asarray(u_x, dtype=complex)
    if t < 0:
        raise ValueError("t must be non-negative")
    re = np.unique(np.real(u).ravel())
    for r in re:
        if t > 0 and not t < explosion_time(params, float(r)):
            raise HorizonExceeded(f"t={t} beyond explosion time of u_x={r}")
    psi2 = u
    if t == 0:
        return ComplexExponents(phi=np.zeros_like(u), psi=np.stack([np.zeros_like(u), psi2], axis=-1))
    th = _theta_c(params, u)
    g = t * expm1_ratio(th * t)
    denom = (1.0 + np.exp(-th * t)) + params.lam * g
    psi1 = u * u * g / denom
    log_q = _continuous_log_q(params, t, u, th)
    phi = 2 * params.kappa / params.sigma**2 * ((params.lam - th) * t / 2 + log_q) + params.mu * u * t
    return ComplexExponents(phi=phi, psi=np.stack([psi1, psi2], axis=-1))


def coefficients(params: HestonParams, tau: float, gamma: float) -> tuple[float, float]:
    """``(T(tau, gamma), Gamma(tau, gamma))`` with ``S = mu tau + T - gamma Gamma V + X``.

    ``T`` and ``-gamma Gamma`` are the ``u_x``-derivatives of ``phi - mu u_x tau``
    and ``psi_1`` at ``u_x = -gamma``.  All algebra is complex; the result is
    cast to real once, after checking the imaginary residue.
    """
    if tau == 0.0:
        return 0.0, 0.0
    lam, sigma, kappa = params.lam, params.sigma, params.kappa
    th_val = theta(params, gamma)
    th = th_val.value
    dth = -th_val.derivative  # derivative in u_x at u_x = -gamma
    E = np.exp(th * tau)
    D = th * (E + 1) + lam * (E - 1)
    inner = dth * (E + 1) + tau * E * (lam * dth + gamma * sigma**2)
    T = 2 * kappa / (sigma**2 * th) / D * (D * (dth + 0.5 * sigma**2 * gamma * tau) - th * inner)
    G = (2 * (E - 1) - gamma * tau * dth * E + gamma * (E - 1) * inner / D) / D
    out = []
    for z in (T, G):
        if abs(z.imag) > 1e-9 * max(1.0, abs(z.real)):
            raise NonRealResult(f"imaginary residue {z.imag:.3e} in Heston coefficient")
        out.append(float(z.real))
    return out[0], out[1]


def equilibrium_price(params: HestonParams, gamma: float, T: float, t: float, V_t: float, X_t: float) -> float:
    """Equilibrium stock price at time ``t`` for adjusted risk aversion ``gamma``."""
    if not 0 <= t <= T:
        raise ValueError("need 0 <= t <= T")
    if V_t < 0:
        raise ValueError("V_t must be non-negative")
    if not T < max_horizon(params, gamma):
        raise HorizonExceeded(f"T={T} >= max horizon {max_horizon(params, gamma)} for gamma={gamma}")
    tau = T - t
    if tau == 0:
        return float(X_t)
    T_c, G = coefficients(params, tau, gamma)
    return params.mu * tau + T_c - gamma * G * V_t + X_t


class HestonModel:
    """Adapter exposing the Heston closed forms to the Fourier pricer."""

    kind = "heston"
    state_names = ("V", "X")

    def __init__(self, params: HestonParams):
        self.params = params

    def default_state(self) -> np.ndarray:
        return np.array([self.params.v0, self.params.x0])

    def log_transform(self, tau, u_x, state):
        return phi_psi(self.params, tau, u_x).exponent(state)

    def explosion_time(self, u_x: float) -> float:
        return explosion_time(self.params, u_x)

    def atom(self, tau, state) -> Optional[tuple[float, float]]:
        if tau == 0:
            return 1.0, float(state[1])
        return None

    def moments(self, tau, state):
        p = self.params
        v, x = float(state[0]), float(state[1])
        level = p.kappa / p.lam
        integrated = level * tau + (v - level) * (-np.expm1(-p.lam * tau)) / p.lam
        return x + p.mu * tau, integrated

    def equilibrium_price(self, gamma, tau, state):
        return equilibrium_price(self.params, gamma, tau, 0.0, float(state[0]), float(state[1]))

    def __repr__(self):
        return f"HestonModel({self.params})"
