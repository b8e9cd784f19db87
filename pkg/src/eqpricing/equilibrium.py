"""Market description and the exponential-utility equilibrium quantities.

With ``A`` agents of exponential utility ``-exp(-gamma_a x)`` endowed with
``c_a + eta_a . S_T``, the equilibrium only sees

    gamma = (sum_a 1/gamma_a)^-1            (market risk aversion)
    gamma_tilde = gamma (eta + n)           (adjusted risk aversion)

and prices are expectations under ``dQ/dP ~ exp(-gamma_tilde . S_T)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ConfigError, ExponentOverflow

#: Largest |exponent| accepted by :func:`pricing_weight`.
EXPONENT_BOUND = 700.0


@dataclass(frozen=True)
class Linear:
    """Terminal payoff ``X_T`` (the stock)."""

    def evaluate(self, x):
        return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class Call:
    """Terminal payoff ``(X_T - strike)^+``."""

    strike: float

    def evaluate(self, x):
        return np.maximum(np.asarray(x, dtype=float) - self.strike, 0.0)


Payoff = Union[Linear, Call]


@dataclass(frozen=True)
class AgentSpec:
    risk_aversion: float
    endowment_constant: float = 0.0
    endowment_weights: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.risk_aversion > 0:
            raise ValueError("risk aversion must be positive")
        object.__setattr__(self, "endowment_weights", tuple(float(w) for w in self.endowment_weights))


@dataclass(frozen=True)
class MarketSpec:
    agents: tuple[AgentSpec, ...]
    net_supply: tuple[float, ...]
    payoffs: tuple[Payoff, ...]
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "net_supply", tuple(float(v) for v in self.net_supply))
        object.__setattr__(self, "payoffs", tuple(self.payoffs))
        k = len(self.payoffs)
        if k < 1:
            raise ValueError("need at least one security")
        if not self.agents:
            raise ValueError("need at least one agent")
        if len(self.net_supply) != k:
            raise ValueError("net_supply length must match payoffs")
        for a in self.agents:
            if len(a.endowment_weights) != k:
                raise ValueError("endowment_weights length must match payoffs")
        strikes = [p.strike for p in self.payoffs if isinstance(p, Call)]
        if any(b <= a for a, b in zip(strikes, strikes[1:])):
            raise ValueError("call strikes must be strictly increasing")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @classmethod
    def from_adjusted(cls, gamma_tilde: Sequence[float], payoffs: Sequence[Payoff], horizon: float) -> "MarketSpec":
        """Single agent with unit risk aversion holding nothing, supply ``gamma_tilde``."""
        k = len(payoffs)
        agent = AgentSpec(1.0, 0.0, (0.0,) * k)
        return cls((agent,), tuple(gamma_tilde), tuple(payoffs), horizon)

    @property
    def strikes(self) -> list[float]:
        return [p.strike for p in self.payoffs if isinstance(p, Call)]

    def payoff_vector(self, x) -> np.ndarray:
        """``f(x)`` with the security index on the last axis."""
        return np.stack([p.evaluate(x) for p in self.payoffs], axis=-1)


@dataclass(frozen=True)
class AdjustedRiskAversion:
    gamma_market: float
    tilde_gamma: np.ndarray
    aggregate_endowment: np.ndarray


def market_risk_aversion(m: MarketSpec) -> float:
    return 1.0 / math.fsum(1.0 / a.risk_aversion for a in m.agents)


def adjusted_risk_aversion(m: MarketSpec) -> AdjustedRiskAversion:
    gamma = market_risk_aversion(m)
    k = len(m.payoffs)
    eta = np.array([math.fsum(a.endowment_weights[j] for a in m.agents) for j in range(k)])
    return AdjustedRiskAversion(gamma, gamma * (eta + np.asarray(m.net_supply)), eta)


def optimal_strategies(m: MarketSpec) -> list[np.ndarray]:
    """Constant holdings ``(gamma / gamma_a)(n + eta) - eta_a`` for each agent."""
    adj = adjusted_risk_aversion(m)
    total = adj.aggregate_endowment + np.asarray(m.net_supply)
    return [adj.gamma_market / a.risk_aversion * total - np.asarray(a.endowment_weights) for a in m.agents]


def pricing_weight(m: MarketSpec | AdjustedRiskAversion | Sequence[float], terminal_payoff) -> np.ndarray | float:
    """Unnormalised density ``exp(-gamma_tilde . payoff)``; payoff index on the last axis."""
    if isinstance(m, MarketSpec):
        gt = adjusted_risk_aversion(m).tilde_gamma
    elif isinstance(m, AdjustedRiskAversion):
        gt = m.tilde_gamma
    else:
        gt = np.asarray(m, dtype=float)
    expo = -np.asarray(terminal_payoff, dtype=float) @ gt
    peak = np.max(np.abs(expo))
    if peak > EXPONENT_BOUND:
        raise ExponentOverflow(f"|gamma_tilde . payoff| = {peak:.4g} exceeds {EXPONENT_BOUND}")
    out = np.exp(expo)
    return float(out) if np.ndim(out) == 0 else out


# -- configuration -----------------------------------------------------------

_AGENT_KEYS = {"risk_aversion", "endowment_constant", "endowment_weights"}
_MARKET_KEYS = {"agents", "net_supply", "payoffs", "horizon", "gamma_tilde"}


def _check_keys(d: dict, allowed: set, where: str):
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


def payoff_from_dict(d: dict) -> Payoff:
    if not isinstance(d, dict) or "type" not in d:
        raise ConfigError("payoff entries need a 'type'")
    if d["type"] == "linear":
        _check_keys(d, {"type"}, "payoff")
        return Linear()
    if d["type"] == "call":
        _check_keys(d, {"type", "strike"}, "payoff")
        return Call(float(d["strike"]))
    raise ConfigError(f"unknown payoff type {d['type']!r}")


def market_from_dict(d: dict) -> MarketSpec:
    """Build a market from a JSON-style mapping.

    Either ``agents`` + ``net_supply`` or the shortcut ``gamma_tilde`` must be given.
    """
    _check_keys(d, _MARKET_KEYS, "market")
    try:
        payoffs = tuple(payoff_from_dict(p) for p in d["payoffs"])
        horizon = float(d["horizon"])
        if "gamma_tilde" in d:
            if "agents" in d or "net_supply" in d:
                raise ConfigError("give either gamma_tilde or agents/net_supply, not both")
            return MarketSpec.from_adjusted(d["gamma_tilde"], payoffs, horizon)
        agents = []
        for a in d["agents"]:
            _check_keys(a, _AGENT_KEYS, "agent")
            agents.append(AgentSpec(float(a["risk_aversion"]), float(a.get("endowment_constant", 0.0)),
                                    tuple(a.get("endowment_weights", [0.0] * len(payoffs)))))
        return MarketSpec(tuple(agents), tuple(d["net_supply"]), payoffs, horizon)
    except KeyError as exc:
        raise ConfigError(f"missing market key {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid market: {exc}") from None


def load_market(path) -> MarketSpec:
    with open(path) as fh:
        return market_from_dict(json.load(fh))
