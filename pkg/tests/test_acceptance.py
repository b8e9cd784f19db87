"""Acceptance run: one PASS/FAIL line per criterion.

Run under pytest (``pytest tests/test_acceptance.py -v -s``) or directly with
``python3 tests/test_acceptance.py``.  Each check returns ``(passed, detail)``;
the pytest wrappers print the line and then assert.
"""

from __future__ import annotations

import contextlib
import io
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from eqpricing import cli, figures, heston, info_based as ib, mc_oracle, oujump  # noqa: E402
from eqpricing.affine_core import riccati_explosion_time, riccati_integrate  # noqa: E402
from eqpricing.equilibrium import AgentSpec, Call, Linear, MarketSpec, optimal_strategies  # noqa: E402
from eqpricing.fourier_pricer import DampingPlan, price_gradient_form, price_linear_special, price_ratio  # noqa: E402
from eqpricing.vol_surface import default_strikes, option_market, pointwise_increasing  # noqa: E402

from conftest import FIG1  # noqa: E402

FIG3A = dict(lam=2.0, mu=1.0, kappa=30.0, theta=30.0, x0=1.0)
CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SEED = 2024


def _line(n: int, passed: bool, detail: str) -> str:
    return f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


# -- 1 -----------------------------------------------------------------------------------


def check_1():
    hp, op = heston.HestonParams(**FIG1), oujump.OUJumpParams(**FIG3A)
    cases = [("heston g=0.2", mc_oracle.heston_oracle(hp, [Linear()], [0.2], 0.5, 1_000_000, SEED)[0],
              heston.equilibrium_price(hp, 0.2, 0.5, 0.0, hp.v0, hp.x0))]
    for g in figures.GAMMA_GRID:
        cases.append((f"oujump g={g}", mc_oracle.oujump_oracle(op, [Linear()], [g], 0.1, 1_000_000, SEED)[0],
                      oujump.equilibrium_price(op, g, 0.1, 0.0, op.x0)))
    ok, parts = True, []
    for name, est, ref in cases:
        z = (est.value - ref) / est.std_error
        good = abs(z) < 3 and est.std_error < 1e-3 * abs(ref)
        ok &= good
        parts.append(f"{name}: z={z:+.2f} se/price={est.std_error / abs(ref):.1e}")
    return ok, "; ".join(parts)


# -- 2 -----------------------------------------------------------------------------------


def check_2():
    hp, op = heston.HestonParams(**FIG1), oujump.OUJumpParams(**FIG3A)
    hm, om = heston.HestonModel(hp), oujump.OUJumpModel(op)
    rng = np.random.default_rng(SEED)
    worst = 0.0
    # gammas above lam/sigma = 2/3 put Heston on the imaginary branch
    for T, g in zip(rng.uniform(0.1, 3.0, 20), np.r_[rng.uniform(-1.0, 0.6, 14), rng.uniform(0.8, 1.5, 6)]):
        t = rng.uniform(0, 0.9) * T
        v, x = rng.uniform(0.0, 0.2), rng.uniform(0.5, 1.5)
        if not T - t < heston.max_horizon(hp, g):
            continue
        ref = heston.equilibrium_price(hp, g, T, t, v, x)
        worst = max(worst, abs(price_linear_special(hm, g, T, t, (v, x)) / ref - 1))
    n_heston = 20
    for T, g in zip(rng.uniform(0.05, 2.0, 20), rng.uniform(-25.0, 25.0, 20)):
        t = rng.uniform(0, 0.9) * T
        x = rng.uniform(0.5, 1.5)
        ref = oujump.equilibrium_price(op, g, T, t, x)
        worst = max(worst, abs(price_linear_special(om, g, T, t, (x,)) / ref - 1))
    return worst < 1e-6, f"{n_heston}+20 grid points, max rel diff {worst:.1e} (tol 1e-6)"


# -- 3 -----------------------------------------------------------------------------------


def check_3():
    models = [("heston", heston.HestonModel(heston.HestonParams(**FIG1)), 0.5),
              ("oujump", oujump.OUJumpModel(oujump.OUJumpParams(**FIG3A)), 0.1)]
    worst = 0.0
    for _, model, T in models:
        for K in (0.9, 1.0, 1.1):
            m = MarketSpec.from_adjusted([0.2, 0.2], (Linear(), Call(K)), T)
            ratio = price_ratio(model, m).prices
            for k in range(2):
                worst = max(worst, abs(price_gradient_form(model, m, k=k) / ratio[k] - 1))
    return worst < 1e-4, f"stock + one call, 3 strikes x 2 models, max rel diff {worst:.1e} (tol 1e-4)"


# -- 4 -----------------------------------------------------------------------------------


def check_4():
    g = 0.2
    plans = [DampingPlan((a,) + (0.0,) * 15, b) for a, b in ((0.25, 3.1), (1.7, 1.7), (3.1, 0.25))]
    worst = 0.0
    for model, T in ((heston.HestonModel(heston.HestonParams(**FIG1)), 0.5),
                     (oujump.OUJumpModel(oujump.OUJumpParams(**FIG3A)), 0.1)):
        m = option_market(g, default_strikes(model, T), T)
        prices = [price_ratio(model, m, p).prices for p in plans]
        for p in prices[1:]:
            worst = max(worst, float(np.max(np.abs(p / prices[0] - 1))))
    return worst < 1e-6, f"N=15, (alpha, beta) in {{(0.25,3.1),(1.7,1.7),(3.1,0.25)}}, max rel spread {worst:.1e} (tol 1e-6)"


# -- 5 -----------------------------------------------------------------------------------


def check_5():
    hp, op = heston.HestonParams(**FIG1), oujump.OUJumpParams(**FIG3A)
    hc, oc = heston.characteristics(hp), oujump.characteristics(op)
    rng = np.random.default_rng(SEED)
    worst = [0.0, 0.0]
    for _ in range(200):
        t, u = rng.uniform(0.01, 3.0), complex(rng.uniform(-1.0, 0.6), rng.uniform(-20, 20))
        cf, num = heston.phi_psi(hp, t, u), riccati_integrate(hc, t, [0.0, u])
        worst[0] = max(worst[0], abs(cf.phi - num.phi), *np.abs(cf.psi - num.psi))
        t, u = rng.uniform(0.01, 2.0), complex(rng.uniform(-25, 25), rng.uniform(-50, 50))
        cf, num = oujump.phi_psi(op, t, u), riccati_integrate(oc, t, [u])
        worst[1] = max(worst[1], abs(cf.phi - num.phi), abs(cf.psi[..., 0] - num.psi[0]))
    return max(worst) < 1e-7, f"200 samples/model, max abs diff heston {worst[0]:.1e}, oujump {worst[1]:.1e} (tol 1e-7)"


# -- 6 -----------------------------------------------------------------------------------


def check_6():
    hp = heston.HestonParams(**FIG1)
    ok, parts = True, []
    for g in (0.8, 1.0, 2.0):  # sigma g > lam: imaginary branch
        bound = heston.max_horizon(hp, g)
        found = riccati_explosion_time(heston.characteristics(hp), [0.0, -g], 2 * bound)
        err = abs(found / bound - 1)
        ok &= err < 0.05
        parts.append(f"heston g={g}: {found:.4g} vs {bound:.4g} ({err:.1e})")
    for pars, u in ((dict(lam=2.0, mu=1.0, kappa=1.0, theta=1.0), 2.0), (FIG3A, 40.0), (FIG3A, -35.0)):
        p = oujump.OUJumpParams(**pars)
        bound = oujump.t_star(p, u)
        found = riccati_explosion_time(oujump.characteristics(p), [u], 2 * bound)
        err = abs(found / bound - 1)
        ok &= err < 0.05
        parts.append(f"oujump theta={p.theta:g} u={u}: {found:.4g} vs {bound:.4g} ({err:.1e})")
    return ok, "; ".join(parts)


# -- 7 -----------------------------------------------------------------------------------


def _itm(pts):
    return all(p.strike < p.spot for p in pts)


def _vol_table(smiles, order, idx):
    return " ".join(f"{v:g}:{smiles[v][idx].implied_vol:.4f}" for v in order)


def check_7(call_supply: str = "traded", convention: str = "lognormal"):
    kw = dict(call_supply=call_supply, convention=convention)
    s1, s2, s3, s3a = (figures.fig1_smiles(**kw), figures.fig2_smiles(**kw), figures.fig3_smiles(**kw),
                       figures.fig3a_smiles(**kw))
    results = {
        "fig1 (ITM, increasing in gamma)": (pointwise_increasing(s1, figures.GAMMA_GRID, _itm),
                                            _vol_table(s1, figures.GAMMA_GRID, 0)),
        "fig2 (increasing in sigma)": (pointwise_increasing(s2, (0.1, 0.3)), _vol_table(s2, (0.1, 0.3), 7)),
        "fig3 (increasing in mean jump)": (pointwise_increasing(s3, sorted(s3)), _vol_table(s3, sorted(s3), 7)),
        "fig3a (ITM, increasing in gamma)": (pointwise_increasing(s3a, figures.GAMMA_GRID, _itm),
                                             _vol_table(s3a, figures.GAMMA_GRID, 0)),
    }
    ok = all(r[0] for r in results.values())
    detail = "; ".join(f"{k} {'holds' if r[0] else 'violated'} [{r[1]}]" for k, r in results.items())
    return ok, f"calls {call_supply}, {convention} vols: {detail}"


# -- 8 -----------------------------------------------------------------------------------


def _criterion_8_parts():
    parts = {}
    # (a) normalization along simulated paths for each prior type
    grid_x = np.linspace(0.0, 40.0, 40001)
    grid = ib.GridPrior.from_function(lambda v: np.exp(-v), grid_x, hard_lower=True)
    worst = 0.0
    for prior in (grid, ib.ExponentialPrior(1.0), ib.DiscretePrior((0.0, 1.0), (0.2, 0.8))):
        spec = ib.InfoModelSpec(1.0, (ib.Factor(prior, 1.0),), gamma_tilde=(0.6,))
        times = np.linspace(0.0, 0.99, 34)
        paths = ib.simulate_information_paths(spec, None, times, seed=SEED, n_paths=30)
        for i in range(30):
            for state in paths.states(i):
                worst = max(worst, abs(ib.conditional_density(spec, 0, state).normalization() - 1))
    parts["a"] = (worst < 1e-8, f"(a) max |norm-1| {worst:.1e}")
    # (b) binary bond terminal convergence
    T = 5.0
    eps = 1e-3 * T
    spec = ib.InfoModelSpec(T, (ib.Factor(ib.DiscretePrior((0.0, 1.0), (0.2, 0.8)), 1.0),), gamma_tilde=(0.6,))
    paths = ib.simulate_information_paths(spec, None, [T - eps], seed=SEED, n_paths=1000)
    gap = float(np.mean(np.abs(ib.binary_bond_path(0.8, 1.0, 1.0, T, 0.6, T - eps, paths.xi[:, 0, 0])
                               - paths.factors[:, 0])))
    parts["b"] = (gap < 0.05, f"(b) mean |S - payoff| {gap:.1e}")
    # (c) closed form vs grid quadrature
    worst = 0.0
    for xi in (-0.8, 0.0, 0.3, 1.5):
        for t in (0.25, 0.5, 0.75):
            state = ib.InfoPathState(t, [xi])
            closed = ib.exponential_price(ib.InfoModelSpec(1.0, (ib.Factor(ib.ExponentialPrior(1.0), 0.5),),
                                                           gamma_tilde=(0.6,)), state)
            gridp = ib.price(ib.InfoModelSpec(1.0, (ib.Factor(grid, 0.5),), gamma_tilde=(0.6,)), state)[0]
            worst = max(worst, abs(gridp / closed - 1))
    parts["c"] = (worst < 1e-5, f"(c) max rel diff {worst:.1e}")
    # (d), (e) innovations over [0, T/2] at step 1e-3
    spec = ib.InfoModelSpec(1.0, (ib.Factor(ib.ExponentialPrior(1.0), 1.0),), gamma_tilde=(0.6,))
    times = np.round(np.arange(0.0, 0.5 + 1e-12, 1e-3), 12)
    paths = ib.simulate_information_paths(spec, None, times, seed=SEED, n_paths=200)
    series = ib.innovation_and_variance(spec, times, paths.xi[:, :, 0])
    qv = float(np.mean(np.sum(series.dW**2, axis=-1)))
    parts["d"] = (abs(qv / 0.5 - 1) < 0.05, f"(d) QV {qv:.4f} vs 0.5")
    res = ib.sde_residuals(series).sum(axis=-1)
    z = float(res.mean() / (res.std(ddof=1) / np.sqrt(res.size)))
    parts["e"] = (abs(z) < 3, f"(e) residual z={z:+.2f}")
    return parts


def check_8():
    parts = _criterion_8_parts()
    return all(p[0] for p in parts.values()), "; ".join(p[1] for p in parts.values())


# -- 9 -----------------------------------------------------------------------------------


def check_9():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(1000):
        a, k = rng.integers(1, 7), rng.integers(1, 6)
        gammas = rng.uniform(1e-3, 50.0, a)
        etas = rng.uniform(-10, 10, (a, k))
        n = rng.uniform(-10, 10, k)
        m = MarketSpec(tuple(AgentSpec(g, 0.0, tuple(e)) for g, e in zip(gammas, etas)), tuple(n),
                       tuple(Linear() for _ in range(k)), 1.0)
        total = np.sum(optimal_strategies(m), axis=0)
        scale = max(1.0, np.max(np.abs(n)), np.max(np.abs(etas))) * a
        worst = max(worst, float(np.max(np.abs(total - n))) / (np.finfo(float).eps * scale))
    return worst <= 64, f"1000 random markets, max residual {worst:.1f} ulp-scale units (tol 64)"


# -- 10 ----------------------------------------------------------------------------------


CLI_RUNS = [
    ["price-heston", "--config", CONFIGS / "price_heston.json"],
    ["price-oujump", "--config", CONFIGS / "price_oujump.json"],
    ["smile", "--config", CONFIGS / "smile_heston_sigma.json"],
    ["info-bond", "--config", CONFIGS / "info_bond.json", "--seed", 7],
    ["info-exponential", "--config", CONFIGS / "info_exponential.json", "--seed", 7],
    ["oracle", "--config", CONFIGS / "oracle_heston.json", "--paths", 100_000, "--seed", 7],
    *[["figure", f] for f in cli.FIGURES],
]


def check_10():
    with tempfile.TemporaryDirectory() as tmp:
        dirs = [Path(tmp) / "a", Path(tmp) / "b"]
        for d in dirs:
            for argv in CLI_RUNS:
                with contextlib.redirect_stdout(io.StringIO()), contextlib.redirect_stderr(io.StringIO()):
                    if cli.run([str(a) for a in argv] + ["--out", str(d)]) != 0:
                        return False, f"{argv[0]} failed"
        # manifests carry a timestamp by design; every data file must match byte for byte
        names = sorted(p.name for p in dirs[0].iterdir() if not p.name.endswith(".manifest.json"))
        same = [n for n in names if (dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes()]
        return len(same) == len(names) == 12, f"{len(same)}/{len(names)} output files byte-identical"


CHECKS = {1: check_1, 2: check_2, 3: check_3, 4: check_4, 5: check_5, 6: check_6, 7: check_7, 8: check_8,
          9: check_9, 10: check_10}


@pytest.mark.parametrize("n", sorted(CHECKS))
def test_criterion(n, capsys):
    passed, detail = CHECKS[n]()
    with capsys.disabled():
        print("\n" + _line(n, passed, detail))
        if n == 7:
            # context for the ordering claims, reported but not scored
            for supply, conv in (("zero", "lognormal"), ("traded", "normal")):
                p, d = check_7(supply, conv)
                print(f"  info: {'holds' if p else 'fails'} with {d}")
    assert passed, detail


if __name__ == "__main__":
    for n, fn in CHECKS.items():
        print(_line(n, *fn()), flush=True)
