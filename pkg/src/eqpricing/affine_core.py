"""Affine-process plumbing: exponents, functional characteristics, Riccati solving.

An affine process ``Y`` on ``R_+^m x R^n`` has a conditional transform

    E[exp(u . Y_T) | F_t] = exp(phi(tau, u) + psi(tau, u) . Y_t),   tau = T - t,

where ``phi``/``psi`` solve the generalized Riccati system

    d/dt phi = F(psi),  phi(0, u) = 0
    d/dt psi = R(psi),  psi(0, u) = u

with ``F``/``R`` of Levy-Khintchine form.  The closed-form models (``heston``,
``oujump``) supply their own ``phi``/``psi``; :func:`riccati_integrate` is the
model-agnostic numeric route used to cross-check them and to price models that
only come with ``F`` and ``R``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import BoundaryCase, InvalidTolerance, PoleEncountered

#: Reject transform arguments closer than this to a pole or branch point.
BOUNDARY_RADIUS = 1e-8
#: |F| or |R| above this means the solution is exploding.
OVERFLOW_GUARD = 1e8


@dataclass(frozen=True)
class ComplexExponents:
    """Value of ``(phi(t, u), psi(t, u))``.

    ``phi`` and ``psi`` may carry leading batch dimensions; ``psi`` has a
    trailing axis of length ``d`` paired componentwise with the state.
    """

    phi: np.ndarray | complex
    psi: np.ndarray

    def exponent(self, state: Sequence[float]) -> np.ndarray | complex:
        """``phi + psi . y`` for a state vector ``y``."""
        return self.phi + np.tensordot(self.psi, np.asarray(state, dtype=float), axes=([-1], [0]))


@dataclass(frozen=True)
class FunctionalCharacteristics:
    """Time-zero derivatives ``F``, ``R`` of the exponents.

    ``F`` maps a complex d-vector to a complex scalar and ``R`` maps it to a
    complex d-vector.  ``near_singularity`` (optional) flags arguments on a
    pole/branch point of ``F`` or ``R``; ``domain_note`` is free text.
    """

    F: Callable[[np.ndarray], complex]
    R: Callable[[np.ndarray], np.ndarray]
    dim: int
    domain_note: str = ""
    near_singularity: Optional[Callable[[np.ndarray], bool]] = field(default=None, compare=False)


@dataclass(frozen=True)
class DomainQuery:
    """Is ``(horizon, u_real)`` in the real moment domain of the process?"""

    horizon: float
    u_real: tuple[float, ...]

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")


class AffineModel(Protocol):
    """What the Fourier pricer needs from a factor model.

    The payoff factor is the last state component ``X``; transforms are only
    ever taken in the ``X`` direction, i.e. at ``u = (0, ..., 0, u_x)``.
    """

    kind: str

    def default_state(self) -> np.ndarray: ...

    def log_transform(self, tau: float, u_x, state) -> np.ndarray:
        """``phi(tau, (0, u_x)) + psi(tau, (0, u_x)) . state`` (vectorised in ``u_x``)."""

    def explosion_time(self, u_x: float) -> float: ...

    def atom(self, tau: float, state) -> Optional[tuple[float, float]]:
        """Point mass ``(weight, location)`` of ``X_T`` given the state, if any."""

    def moments(self, tau: float, state) -> tuple[float, float]:
        """P-mean and P-variance of ``X_T`` given the state."""


def _check_tolerances(step_control) -> tuple[float, float]:
    rtol, atol = step_control
    if not (rtol > 0 and atol > 0):
        raise InvalidTolerance(f"tolerances must be positive, got {step_control!r}")
    return float(rtol), float(atol)


def _rhs_factory(chars: FunctionalCharacteristics, guard: float):
    d = chars.dim

    def rhs(_t, y):
        psi = y[1:]
        f = complex(chars.F(psi))
        r = np.asarray(chars.R(psi), dtype=complex).reshape(d)
        if not np.isfinite(f) or abs(f) > guard or not np.all(np.isfinite(r)) or np.max(np.abs(r)) > guard:
            raise _Overflow
        return np.concatenate(([f], r))

    return rhs


class _Overflow(Exception):
    pass


def riccati_integrate(
    chars: FunctionalCharacteristics,
    t: float,
    u,
    step_control: tuple[float, float] = (1e-10, 1e-13),
    guard: float = OVERFLOW_GUARD,
) -> ComplexExponents:
    """Integrate the Riccati system from 0 to ``t`` with an adaptive order-8 RK scheme.

    Raises :class:`PoleEncountered` if ``F`` or ``R`` evaluated along the
    solution exceeds ``guard`` (the exponents are blowing up, i.e. ``(t, Re u)``
    lies outside the moment domain), and :class:`InvalidTolerance` for
    non-positive tolerances.
    """
    rtol, atol = _check_tolerances(step_control)
    if t < 0:
        raise ValueError("t must be non-negative")
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    if u.shape != (chars.dim,):
        raise ValueError(f"u must have length {chars.dim}")
    if chars.near_singularity is not None and chars.near_singularity(u):
        raise BoundaryCase(f"u={u} lies on a singularity of the characteristics")
    if t == 0:
        return ComplexExponents(phi=0j, psi=u.copy())

    y0 = np.concatenate(([0j], u))
    try:
        sol = solve_ivp(_rhs_factory(chars, guard), (0.0, t), y0, method="DOP853", rtol=rtol, atol=atol)
    except _Overflow:
        raise PoleEncountered(f"Riccati solution exploded before t={t} for u={u}") from None
    if sol.status != 0:
        raise PoleEncountered(f"integrator stopped early ({sol.message}) for u={u}")
    y = sol.y[:, -1]
    return ComplexExponents(phi=complex(y[0]), psi=y[1:].copy())


def riccati_explosion_time(
    chars: FunctionalCharacteristics,
    u,
    t_max: float,
    step_control: tuple[float, float] = (1e-10, 1e-13),
    guard: float = OVERFLOW_GUARD,
) -> float:
    """First time in ``[0, t_max]`` at which the overflow guard trips, else ``inf``.

    The guard is checked on the accepted dense output as well as on every
    right-hand-side evaluation, so the returned time is accurate to roughly
    the last accepted step.
    """
    rtol, atol = _check_tolerances(step_control)
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    rhs = _rhs_factory(chars, guard)
    last_t = [0.0]

    def tracked(t, y):
        out = rhs(t, y)
        last_t[0] = max(last_t[0], t)
        return out

    try:
        sol = solve_ivp(tracked, (0.0, t_max), np.concatenate(([0j], u)), method="DOP853", rtol=rtol, atol=atol)
    except _Overflow:
        return last_t[0]
    if sol.status != 0:
        return float(sol.t[-1])
    return float("inf")


def domain_contains(model_kind: str, params, q: DomainQuery) -> bool:
    """True iff ``(q.horizon, q.u_real)`` lies in the moment domain of the model.

    ``model_kind`` is ``"heston"`` (``u_real = (u_v, u_x)``, closed-form explosion
    time only for ``u_v = 0``), ``"oujump"`` (``u_real = (u,)``) or ``"generic"``
    (``params`` is a :class:`FunctionalCharacteristics`; numeric integration).
    """
    if model_kind == "heston":
        from . import heston

        u_v, u_x = q.u_real
        if u_v != 0.0:
            return domain_contains("generic", heston.characteristics(params), q)
        if abs(abs(u_x) - params.lam / params.sigma) < BOUNDARY_RADIUS:
            raise BoundaryCase(f"|u_x| = lambda/sigma = {params.lam / params.sigma}")
        return q.horizon < heston.explosion_time(params, u_x)
    if model_kind == "oujump":
        from . import oujump

        (u,) = q.u_real
        return q.horizon < oujump.t_star(params, u)
    if model_kind == "generic":
        if q.horizon == 0:
            return True
        try:
            riccati_integrate(params, q.horizon, np.asarray(q.u_real, dtype=complex))
        except PoleEncountered:
            return False
        return True
    raise ValueError(f"unknown model kind {model_kind!r}")


def expm1_ratio(z):
    """``(1 - exp(-z)) / z`` evaluated without cancellation near ``z = 0``."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-5
    safe = np.where(small, 1.0, z)
    out = -np.expm1(-safe) / safe
    series = 1 - z / 2 + z * z / 6 - z**3 / 24
    return np.where(small, series, out)
