"""Recipes regenerating the smile and defaultable-bond experiments as tables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import heston, oujump
from .info_based import binary_bond_path
from .quadrature import QuadratureConfig
from .vol_surface import default_strikes, smile, smile_rows

GAMMA_GRID = (0.05, 0.1, 0.2, 0.4)
SMILE_HEADER = ("sweep_value", "strike", "call_price", "implied_vol")
BOND_HEADER = ("sigma", "gamma_tilde", "outcome", "t", "xi", "price")

HESTON_BASE = dict(mu=0.1, kappa=0.006, lam=0.2, v0=0.03, x0=1.0)
HESTON_T = 0.5
OU_BASE = dict(lam=2.0, mu=1.0, x0=1.0)
OU_T = 0.1
OU_JUMPS = ((20.0, 20.0), (30.0, 30.0))  # (intensity kappa, theta = 1 / mean jump)

BOND_P1 = 0.8
BOND_T = 5.0
BOND_TIMES = np.round(np.arange(0.0, 4.9 + 1e-9, 0.01), 10)
FIG5_GAMMAS = (0.2, 1.0)


@dataclass(frozen=True)
class Table:
    header: tuple
    rows: list


def heston_model(sigma: float) -> heston.HestonModel:
    return heston.HestonModel(heston.HestonParams(sigma=sigma, **HESTON_BASE))


def ou_model(kappa: float, theta: float) -> oujump.OUJumpModel:
    return oujump.OUJumpModel(oujump.OUJumpParams(kappa=kappa, theta=theta, **OU_BASE))


def fig1_smiles(strikes=None, quad=QuadratureConfig(), **kw) -> dict:
    model = heston_model(0.3)
    strikes = default_strikes(model, HESTON_T) if strikes is None else strikes
    return smile(lambda g: (model, g), GAMMA_GRID, strikes, HESTON_T, quad=quad, **kw)


def fig2_smiles(strikes=None, quad=QuadratureConfig(), **kw) -> dict:
    strikes = default_strikes(heston_model(0.3), HESTON_T) if strikes is None else strikes
    return smile(lambda s: (heston_model(s), 0.2), (0.1, 0.3), strikes, HESTON_T, quad=quad, **kw)


def fig3_smiles(strikes=None, quad=QuadratureConfig(), **kw) -> dict:
    """Sweep keyed by the mean jump size ``1/theta``; intensity moves with it."""
    strikes = default_strikes(ou_model(30.0, 30.0), OU_T) if strikes is None else strikes
    by_mean = {1.0 / th: (k, th) for k, th in OU_JUMPS}
    return smile(lambda m: (ou_model(*by_mean[m]), 0.2), sorted(by_mean), strikes, OU_T, quad=quad, **kw)


def fig3a_smiles(strikes=None, quad=QuadratureConfig(), **kw) -> dict:
    model = ou_model(30.0, 30.0)
    strikes = default_strikes(model, OU_T) if strikes is None else strikes
    return smile(lambda g: (model, g), GAMMA_GRID, strikes, OU_T, quad=quad, **kw)


def _bond_rows(sigmas, gammas, seed: int) -> list:
    # one bridge path shared by every curve so that only the parameters differ
    rng = np.random.default_rng(seed)
    t = BOND_TIMES
    dt = np.diff(t)
    beta = np.zeros_like(t)
    for j in range(1, t.size):
        mean = beta[j - 1] * (BOND_T - t[j]) / (BOND_T - t[j - 1])
        var = dt[j - 1] * (BOND_T - t[j]) / (BOND_T - t[j - 1])
        beta[j] = mean + np.sqrt(var) * rng.standard_normal()
    rows = []
    for sigma in sigmas:
        for g in gammas:
            for outcome, x in (("no_default", 1.0), ("default", 0.0)):
                xi = sigma * x * t + beta
                price = binary_bond_path(BOND_P1, 1.0, sigma, BOND_T, g, t, xi)
                rows += [(sigma, g, outcome, a, b, c) for a, b, c in zip(t, xi, price)]
    return rows


def fig4_table(seed: int = 0) -> Table:
    return Table(BOND_HEADER, _bond_rows((0.1, 1.0), (0.6,), seed))


def fig5_table(seed: int = 0) -> Table:
    return Table(BOND_HEADER, _bond_rows((0.2, 0.5), FIG5_GAMMAS, seed))


def first_crossing(times, prices, level: float) -> float:
    """First time the price is at or above ``level`` (inf if never)."""
    hit = np.nonzero(np.asarray(prices) >= level)[0]
    return float(times[hit[0]]) if hit.size else float("inf")


SMILE_RECIPES = {"1": fig1_smiles, "2": fig2_smiles, "3": fig3_smiles, "3a": fig3a_smiles}


def figure_table(name: str, seed: int = 0, quad=QuadratureConfig(), **kw) -> Table:
    if name in SMILE_RECIPES:
        return Table(SMILE_HEADER, smile_rows(SMILE_RECIPES[name](quad=quad, **kw)))
    if name == "4":
        return fig4_table(seed)
    if name == "5":
        return fig5_table(seed)
    raise ValueError(f"unknown figure {name!r}")
