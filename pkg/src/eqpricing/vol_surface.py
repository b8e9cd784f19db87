"""Implied volatilities of equilibrium call prices.

Smiles are quoted against the zero-rate lognormal (Black) call formula with
the equilibrium stock price as spot.  Because the model's underlying is
additive, the normal (Bachelier) convention is available as an alternative.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import bisect
from scipy.special import ndtr

from .equilibrium import Call, Linear, MarketSpec
from .errors import NotInvertible, PricingError
from .fourier_pricer import price_market
from .quadrature import QuadratureConfig

VOL_BRACKET = (1e-6, 5.0)
RESIDUAL_TOL = 1e-10


def black_call(spot: float, strike: float, tau: float, vol):
    vol = np.asarray(vol, dtype=float)
    sd = vol * np.sqrt(tau)
    d1 = (np.log(spot / strike) + 0.5 * sd * sd) / sd
    return spot * ndtr(d1) - strike * ndtr(d1 - sd)


def normal_call(spot: float, strike: float, tau: float, vol):
    sd = np.asarray(vol, dtype=float) * np.sqrt(tau)
    d = (spot - strike) / sd
    return (spot - strike) * ndtr(d) + sd * np.exp(-0.5 * d * d) / np.sqrt(2 * np.pi)


def implied_vol(spot: float, strike: float, tau: float, call_price: float, convention: str = "lognormal",
                return_flag: bool = False):
    """Volatility reproducing ``call_price`` under the chosen reference formula.

    Bisection on ``[1e-6, 5]`` (scaled by ``max(1, |spot|)`` for the normal
    convention).  A price equal to intrinsic value returns the lower bracket;
    with ``return_flag=True`` the result is ``(vol, at_lower_bracket)``.
    """
    if not tau > 0:
        raise NotInvertible("maturity must be positive")
    intrinsic = max(spot - strike, 0.0)
    lo, hi = VOL_BRACKET
    if convention == "lognormal":
        if spot <= 0 or strike <= 0:
            raise NotInvertible("lognormal quotes need positive spot and strike")
        if not intrinsic <= call_price < spot:
            raise NotInvertible(f"price {call_price!r} outside [{intrinsic}, {spot})")
        formula = black_call
    elif convention == "normal":
        if not intrinsic <= call_price:
            raise NotInvertible(f"price {call_price!r} below intrinsic {intrinsic}")
        scale = max(1.0, abs(spot))
        lo, hi = lo * scale, hi * scale
        formula = normal_call
    else:
        raise ValueError(f"unknown convention {convention!r}")

    def resid(v):
        return float(formula(spot, strike, tau, v)) - call_price

    r_lo = resid(lo)
    # within rounding of the minimum-vol price counts as intrinsic
    if r_lo >= -8 * np.finfo(float).eps * max(abs(spot), abs(strike)):
        # the price is at (or numerically below) the smallest quotable vol: intrinsic value
        if r_lo > RESIDUAL_TOL:
            raise NotInvertible(f"price {call_price!r} below the minimum-vol price")
        return (lo, True) if return_flag else lo
    if resid(hi) < 0:
        raise NotInvertible(f"price {call_price!r} above the maximum-vol price")
    vol = bisect(resid, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=400)
    if abs(resid(vol)) >= RESIDUAL_TOL:
        raise NotInvertible(f"bisection residual {resid(vol):.3e} above tolerance")
    return (vol, False) if return_flag else vol


@dataclass(frozen=True)
class SmilePoint:
    sweep_value: object
    strike: float
    call_price: float
    implied_vol: float  # nan when not invertible
    spot: float = float("nan")
    status: str = "ok"  # "ok", "lower_bracket", or an error message

    @property
    def ok(self) -> bool:
        return self.status in ("ok", "lower_bracket")


def default_strikes(model, horizon: float, state=None, n: int = 15, width: float = 2.0) -> np.ndarray:
    """``n`` equally spaced strikes across the P-mean of ``X_T`` +- ``width`` standard deviations."""
    state = model.default_state() if state is None else state
    mean, var = model.moments(horizon, state)
    sd = np.sqrt(var)
    return np.linspace(mean - width * sd, mean + width * sd, n)


CALL_SUPPLY = ("traded", "zero")


def option_market(gamma: float, strikes: Sequence[float], horizon: float, call_supply: str = "traded") -> MarketSpec:
    """One stock and calls on it.

    With ``call_supply="traded"`` every security carries adjusted risk
    aversion ``gamma`` and so enters the pricing density; with ``"zero"`` only
    the stock does and the calls are priced as marginal claims.
    """
    if call_supply not in CALL_SUPPLY:
        raise ValueError(f"call_supply must be one of {CALL_SUPPLY}")
    payoffs = (Linear(), *[Call(float(k)) for k in strikes])
    call_gamma = gamma if call_supply == "traded" else 0.0
    return MarketSpec.from_adjusted([gamma] + [call_gamma] * len(strikes), payoffs, horizon)


def smile(build: Callable[[object], tuple], sweep_values: Iterable, strikes: Sequence[float], horizon: float,
          t: float = 0.0, state=None, quad: QuadratureConfig = QuadratureConfig(),
          convention: str = "lognormal", call_supply: str = "traded") -> dict:
    """One smile per sweep value; ``build(value)`` returns ``(model, gamma)``.

    All strikes are traded together with the stock.  Failures are recorded on
    the affected points and do not stop the sweep.
    """
    out = {}
    tau = horizon - t
    for value in sweep_values:
        points = []
        try:
            model, gamma = build(value)
            prices = price_market(model, option_market(gamma, strikes, horizon, call_supply), quad=quad, t=t, state=state)
            spot, calls = float(prices[0]), prices[1:]
        except (PricingError, ValueError) as exc:
            out[value] = [SmilePoint(value, float(k), float("nan"), float("nan"), status=f"error: {exc}") for k in strikes]
            continue
        for k, c in zip(strikes, calls):
            try:
                vol, flag = implied_vol(spot, float(k), tau, float(c), convention, return_flag=True)
                points.append(SmilePoint(value, float(k), float(c), float(vol), spot, "lower_bracket" if flag else "ok"))
            except NotInvertible as exc:
                points.append(SmilePoint(value, float(k), float(c), float("nan"), spot, f"not invertible: {exc}"))
        out[value] = points
    return out


def smile_rows(smiles: dict) -> list[tuple]:
    """Flatten to ``(sweep_value, strike, call_price, implied_vol)`` rows."""
    return [(p.sweep_value, p.strike, p.call_price, p.implied_vol) for pts in smiles.values() for p in pts]


def in_the_money(points: Sequence[SmilePoint]) -> list[SmilePoint]:
    return [p for p in points if p.strike < p.spot]


def pointwise_increasing(smiles: dict, order: Sequence, subset: Optional[Callable] = None) -> bool:
    """True if implied vol increases strictly along ``order`` at every (selected) strike."""
    curves = [smiles[v] for v in order]
    for idx in range(len(curves[0])):
        pts = [c[idx] for c in curves]
        if subset is not None and not subset(pts):
            continue
        vols = [p.implied_vol for p in pts]
        if any(not np.isfinite(v) for v in vols) or any(b <= a for a, b in zip(vols, vols[1:])):
            return False
    return True
