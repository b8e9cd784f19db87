"""Pure-jump Ornstein-Uhlenbeck factor model.

    dX = -lam (X - mu) dt + dJ,

``J`` compound Poisson with intensity ``kappa`` and symmetric Laplace jumps
(density ``theta/2 exp(-theta |x|)``, mean absolute jump ``1/theta``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affine_core import BOUNDARY_RADIUS, ComplexExponents, FunctionalCharacteristics
from .errors import BoundaryCase, HorizonExceeded, PoleEncountered


@dataclass(frozen=True)
class OUJumpParams:
    lam: float
    mu: float
    kappa: float
    theta: float
    x0: float = 0.0

    def __post_init__(self):
        if not (self.lam > 0 and self.kappa > 0 and self.theta > 0):
            raise ValueError("lam, kappa and theta must be positive")


def characteristics(params: OUJumpParams) -> FunctionalCharacteristics:
    lam, mu, kappa, th = params.lam, params.mu, params.kappa, params.theta

    def F(u):
        u = u[0]
        return lam * mu * u + kappa * u * u / (th * th - u * u)

    def R(u):
        return np.array([-lam * u[0]], dtype=complex)

    def near(u):
        return bool(np.min(np.abs([u[0] - th, u[0] + th])) < BOUNDARY_RADIUS)

    return FunctionalCharacteristics(F=F, R=R, dim=1, domain_note=f"poles of F at u = +-{th}", near_singularity=near)


def t_star(params: OUJumpParams, u: float) -> float:
    """Explosion time of ``E[exp(u X_t)]``: infinite for ``|u| < theta``."""
    a = abs(u)
    if abs(a - params.theta) < BOUNDARY_RADIUS:
        raise BoundaryCase(f"|u| = theta = {params.theta}")
    if a < params.theta:
        return float("inf")
    return -np.log(params.theta**2 / u**2) / (2 * params.lam)


def phi_psi(params: OUJumpParams, t: float, u) -> ComplexExponents:
    """Closed-form exponents, vectorised over complex ``u``.

    ``theta^2 - u^2 e^{-2 lam s}`` traces a straight segment as ``s`` runs over
    ``[0, t]``, so the principal logarithm of the ratio is already the
    continuous one.
    """
    u = np.asarray(u, dtype=complex)
    lam, th = params.lam, params.theta
    if t < 0:
        raise ValueError("t must be non-negative")
    if np.any(np.abs(u - th) < BOUNDARY_RADIUS) or np.any(np.abs(u + th) < BOUNDARY_RADIUS):
        raise PoleEncountered(f"u at a pole of F (+-{th})")
    for r in np.unique(np.real(u).ravel()):
        if t > 0 and not t < t_star(params, float(r)):
            raise HorizonExceeded(f"t={t} beyond t*({r})")
    decay = np.exp(-lam * t)
    psi = u * decay
    if t == 0:
        return ComplexExponents(phi=np.zeros_like(u), psi=psi[..., None])
    ratio = (th * th - u * u * decay * decay) / (th * th - u * u)
    phi = params.kappa / (2 * lam) * np.log(ratio) + params.mu * u * (1 - decay)
    return ComplexExponents(phi=phi, psi=psi[..., None])


def equilibrium_price(params: OUJumpParams, gamma_tilde: float, T: float, t: float, X_t: float) -> float:
    """Equilibrium stock price; the transform variable is ``u = -gamma_tilde``."""
    if not 0 <= t <= T:
        raise ValueError("need 0 <= t <= T")
    g, th, lam = gamma_tilde, params.theta, params.lam
    if not T < t_star(params, -g):
        raise HorizonExceeded(f"T={T} >= t*(-gamma_tilde)")
    tau = T - t
    if tau == 0:
        return float(X_t)
    e1 = np.exp(-lam * tau)
    e2 = e1 * e1
    risk = params.kappa * th**2 * g * (e2 - 1) / (lam * (th**2 - g**2) * (th**2 - g**2 * e2))
    return float(risk + params.mu * (1 - e1) + e1 * X_t)


class OUJumpModel:
    """Adapter exposing the OU-jump closed forms to the Fourier pricer."""

    kind = "oujump"
    state_names = ("X",)

    def __init__(self, params: OUJumpParams):
        self.params = params

    def default_state(self) -> np.ndarray:
        return np.array([self.params.x0])

    def log_transform(self, tau, u_x, state):
        return phi_psi(self.params, tau, u_x).exponent(state)

    def explosion_time(self, u_x: float) -> float:
        return t_star(self.params, u_x)

    def atom(self, tau, state):
        # no jump in (t, T]: X_T is the deterministic OU relaxation of X_t
        p = self.params
        decay = np.exp(-p.lam * tau)
        return float(np.exp(-p.kappa * tau)), float(p.mu + (state[0] - p.mu) * decay)

    def moments(self, tau, state):
        p = self.params
        decay = np.exp(-p.lam * tau)
        var = p.kappa * (2 / p.theta**2) * (-np.expm1(-2 * p.lam * tau)) / (2 * p.lam)
        return float(p.mu + (state[0] - p.mu) * decay), float(var)

    def equilibrium_price(self, gamma, tau, state):
        return equilibrium_price(self.params, gamma, tau, 0.0, float(state[0]))

    def __repr__(self):
        return f"OUJumpModel({self.params})"
