"""Brute-force Monte Carlo check of equilibrium prices.

Every price is ``E[f^k w] / E[w]`` with ``w = exp(-gamma_tilde . f(X_T))``;
the oracle estimates both means from the same samples and reports a
delta-method standard error for the ratio.  Paths are generated in fixed-size
chunks, each with its own child seed, so results depend only on the seed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import EffectiveSampleTooSmall

CHUNK = 100_000
#: Warn when one sample carries more than this share of the total weight.
MAX_WEIGHT_SHARE = 0.01


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    std_error: float
    n_paths: int
    seed: int | None = None
    estimator: str = "ratio_of_means"

    def as_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "n_paths": self.n_paths, "seed": self.seed}


def _chunks(n_paths: int, seed: int):
    n_chunks = -(-n_paths // CHUNK)
    for c, child in enumerate(np.random.SeedSequence(seed).spawn(n_chunks)):
        yield min(CHUNK, n_paths - c * CHUNK), np.random.default_rng(child)


def simulate_heston(params, T: float, n_paths: int, n_steps: int, seed: int, coupled_coarse: bool = False):
    """Terminal ``(V_T, X_T)`` under full-truncation Euler for ``V``.

    ``X_T = x0 + mu T + sqrt(int V dt) Z`` is exact given the variance path
    (trapezoid-integrated), since ``X`` is driven by an independent Brownian
    motion.  With ``coupled_coarse=True`` a second ``X_T`` using half as many
    steps and the same Brownian increments is returned as well, for the
    step-halving bias check.
    """
    if n_steps < 100 * T:
        raise ValueError(f"need at least 100 steps per unit time, got {n_steps} for T={T}")
    if coupled_coarse and n_steps % 2:
        raise ValueError("coupled run needs an even number of steps")
    kappa, lam, sigma = params.kappa, params.lam, params.sigma
    dt = T / n_steps
    out_v, out_x, out_xc = [], [], []
    for m, rng in _chunks(n_paths, seed):
        v = np.full(m, float(params.v0))
        iv = np.zeros(m)
        if coupled_coarse:
            vc = v.copy()
            ivc = np.zeros(m)
            dw_pair = np.zeros(m)
        for step in range(n_steps):
            dw = rng.standard_normal(m) * np.sqrt(dt)
            vp = np.maximum(v, 0.0)
            v_new = v + (kappa - lam * vp) * dt + sigma * np.sqrt(vp) * dw
            iv += 0.5 * (vp + np.maximum(v_new, 0.0)) * dt
            v = v_new
            if coupled_coarse:
                dw_pair += dw
                if step % 2 == 1:
                    vcp = np.maximum(vc, 0.0)
                    vc_new = vc + (kappa - lam * vcp) * 2 * dt + sigma * np.sqrt(vcp) * dw_pair
                    ivc += 0.5 * (vcp + np.maximum(vc_new, 0.0)) * 2 * dt
                    vc = vc_new
                    dw_pair[:] = 0.0
        z = rng.standard_normal(m)
        out_v.append(np.maximum(v, 0.0))
        out_x.append(params.x0 + params.mu * T + np.sqrt(iv) * z)
        if coupled_coarse:
            out_xc.append(params.x0 + params.mu * T + np.sqrt(ivc) * z)
    v_t, x_t = np.concatenate(out_v), np.concatenate(out_x)
    if coupled_coarse:
        return v_t, x_t, np.concatenate(out_xc)
    return v_t, x_t


def simulate_oujump(params, T: float, n_paths: int, seed: int):
    """Exact terminal values ``X_T`` and jump counts for the OU-jump model.

    Given ``N ~ Poisson(kappa T)`` jumps, their times are i.i.d. uniform on
    ``[0, T]`` (the same law as exponential inter-arrivals); each jump is
    ``+-Exp(mean 1/theta)`` and decays by ``exp(-lam (T - tau))`` up to ``T``.
    """
    lam, mu, kappa, theta = params.lam, params.mu, params.kappa, params.theta
    base = mu + (params.x0 - mu) * np.exp(-lam * T)
    xs, counts = [], []
    for m, rng in _chunks(n_paths, seed):
        n = rng.poisson(kappa * T, size=m)
        total = int(n.sum())
        owner = np.repeat(np.arange(m), n)
        times = rng.uniform(0.0, T, size=total)
        sizes = rng.exponential(1.0 / theta, size=total) * np.where(rng.random(total) < 0.5, -1.0, 1.0)
        jumps = np.bincount(owner, weights=sizes * np.exp(-lam * (T - times)), minlength=m)
        xs.append(base + jumps)
        counts.append(n)
    return np.concatenate(xs), np.concatenate(counts)


def _payoff_matrix(x, payoffs) -> np.ndarray:
    cols = []
    for p in payoffs:
        fn = p.evaluate if hasattr(p, "evaluate") else p
        cols.append(np.broadcast_to(np.asarray(fn(x), dtype=float), np.shape(x)[:1]))
    return np.stack(cols, axis=-1)


def ratio_estimate(x_samples, payoffs: Sequence, gamma_tilde: Sequence[float], seed: int | None = None) -> list[OracleEstimate]:
    """Ratio-of-means estimates ``E[f^k w] / E[w]`` for each payoff.

    Weights are computed relative to their largest value, which leaves the
    ratio unchanged and avoids overflow.  The standard error is the delta
    method ``sd((f^k - R) w) / (sqrt(n) mean(w))``.
    """
    f = _payoff_matrix(np.asarray(x_samples, dtype=float), payoffs)
    gt = np.asarray(gamma_tilde, dtype=float)
    n = f.shape[0]
    expo = -f @ gt
    w = np.exp(expo - expo.max())
    share = w.max() / w.sum()
    if share > MAX_WEIGHT_SHARE:
        warnings.warn(f"largest weight carries {share:.2%} of the total", EffectiveSampleTooSmall, stacklevel=2)
    w_bar = w.mean()
    out = []
    for k in range(f.shape[1]):
        r = float(np.average(f[:, k], weights=w))
        resid = (f[:, k] - r) * w
        se = float(np.sqrt(np.sum(resid**2) / (n - 1) / n) / w_bar)
        out.append(OracleEstimate(r, se, n, seed))
    return out


# -- model recipes ------------------------------------------------------------------


def heston_oracle(params, payoffs: Sequence, gamma_tilde: Sequence[float], T: float, n_paths: int, seed: int,
                  n_steps: int | None = None) -> list[OracleEstimate]:
    n_steps = n_steps or max(100, int(np.ceil(200 * T)))
    _, x_t = simulate_heston(params, T, n_paths, n_steps, seed)
    return ratio_estimate(x_t, payoffs, gamma_tilde, seed)


def heston_step_halving(params, payoffs: Sequence, gamma_tilde: Sequence[float], T: float, n_paths: int, seed: int,
                        n_steps: int) -> tuple[list[OracleEstimate], list[OracleEstimate], np.ndarray]:
    """Estimates at ``n_steps`` and ``n_steps / 2`` on coupled paths, with their difference's SE.

    The third element is the standard error of the paired difference, which
    is far smaller than either estimate's SE because the paths share noise.
    """
    _, fine, coarse = simulate_heston(params, T, n_paths, n_steps, seed, coupled_coarse=True)
    est_f = ratio_estimate(fine, payoffs, gamma_tilde, seed)
    est_c = ratio_estimate(coarse, payoffs, gamma_tilde, seed)
    gt = np.asarray(gamma_tilde, dtype=float)
    ses = []
    for k, (a, b) in enumerate(zip(est_f, est_c)):
        terms = []
        for x, est in ((fine, a), (coarse, b)):
            f = _payoff_matrix(x, payoffs)
            e = -f @ gt
            w = np.exp(e - e.max())
            terms.append((f[:, k] - est.value) * w / w.mean())
        d = terms[0] - terms[1]
        ses.append(float(d.std(ddof=1) / np.sqrt(len(d))))
    return est_f, est_c, np.array(ses)


def oujump_oracle(params, payoffs: Sequence, gamma_tilde: Sequence[float], T: float, n_paths: int,
                  seed: int) -> list[OracleEstimate]:
    x_t, _ = simulate_oujump(params, T, n_paths, seed)
    return ratio_estimate(x_t, payoffs, gamma_tilde, seed)


def info_oracle(spec, state, n_paths: int, seed: int) -> list[OracleEstimate]:
    """Sample each factor from its plain posterior at ``state`` and reweight by the tilt."""
    from .info_based import conditional_density

    draws = []
    for (m, rng) in _chunks(n_paths, seed):
        cols = []
        for i in range(len(spec.factors)):
            post = conditional_density(spec, i, state)
            if post.density is None:
                cols.append(rng.choice(post.x, size=m, p=post.mass))
            else:
                cdf = np.concatenate(([0.0], np.cumsum(0.5 * (post.density[1:] + post.density[:-1]) * np.diff(post.x))))
                cols.append(np.interp(rng.uniform(0, cdf[-1], m), cdf, post.x))
        draws.append(np.stack(cols, axis=-1))
    x = np.concatenate(draws)
    f = np.stack([np.asarray(p(*x.T), dtype=float) * np.ones(len(x)) for p in spec.payoffs], axis=-1)
    identity: list[Callable] = [lambda v, k=k: v[..., k] for k in range(f.shape[1])]
    return ratio_estimate(f, identity, spec.gamma_tilde, seed)
