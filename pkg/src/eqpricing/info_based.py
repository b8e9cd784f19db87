"""Equilibrium prices when market factors are revealed through Brownian-bridge information.

Each factor ``X_i`` is observed through ``xi_t = sigma_i X_i t + beta_t`` with
``beta`` a standard Brownian bridge on ``[0, T]``.  Given ``xi_t`` the factor
has posterior density

    pi_t(x) ~ v(x) exp[T/(T-t) (sigma x xi_t - (sigma x)^2 t / 2)],

and prices are ratios of posterior expectations weighted by
``z = exp(-gamma_tilde . f)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import erfcx, expit, logsumexp

from .errors import DegenerateTime, IntegrabilityViolation, InvalidGrid

#: Times closer than this fraction of ``T`` to the horizon are rejected.
TERMINAL_GUARD = 1e-9
#: Soft grid edges must sit this many posterior standard deviations from the mean.
COVERAGE_SDS = 8.0
_SQRT_2PI = np.sqrt(2 * np.pi)
# truncated-normal moments switch to asymptotic series below z = -_TAIL_Z
_TAIL_Z = 10.0
_MEAN_SERIES = (1, -2, 10, -74, 706, -8162, 110410, -1708394, 29752066, -576037442, 12277827850,
                -285764591114, 7213364729026, -196316804255522, 5731249477826890)
_VAR_SERIES = (1, -6, 50, -518, 6354, -89782, 1435330, -25625910, 505785122, -10944711398, 257834384850,
               -6572585595622, 180334118225650, -5300553714899094)


# -- priors ------------------------------------------------------------------


@dataclass(frozen=True)
class DiscretePrior:
    points: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        pr = np.asarray(self.probs, dtype=float)
        if pts.shape != pr.shape or pts.ndim != 1 or pts.size == 0:
            raise ValueError("points and probs must be non-empty and of equal length")
        if np.any(pr < 0) or abs(pr.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be non-negative and sum to one")
        object.__setattr__(self, "points", tuple(pts))
        object.__setattr__(self, "probs", tuple(pr))


@dataclass(frozen=True)
class ExponentialPrior:
    """Density ``exp(-x / kappa) / kappa`` on ``x >= 0`` (mean ``kappa``)."""

    kappa: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")


@dataclass(frozen=True)
class GridPrior:
    """Density tabulated on increasing abscissae, integrated by the trapezoid rule.

    ``hard_lower`` / ``hard_upper`` mark grid ends that are true support
    boundaries and so are exempt from the coverage check.
    """

    x: np.ndarray
    density: np.ndarray
    hard_lower: bool = False
    hard_upper: bool = False

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if x.ndim != 1 or x.shape != d.shape or x.size < 3:
            raise InvalidGrid("grid needs matching 1-d abscissae and densities (at least 3 points)")
        if np.any(np.diff(x) <= 0):
            raise InvalidGrid("abscissae must be strictly increasing")
        if np.any(d < 0):
            raise ValueError("density must be non-negative")
        total = np.trapezoid(d, x)
        if abs(total - 1.0) > 1e-8:
            raise ValueError(f"density integrates to {total!r}, not 1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "density", d)

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], x, **kw) -> "GridPrior":
        x = np.asarray(x, dtype=float)
        d = np.asarray(fn(x), dtype=float)
        return cls(x, d / np.trapezoid(d, x), **kw)


Prior = Union[DiscretePrior, ExponentialPrior, GridPrior]


@dataclass(frozen=True)
class Factor:
    prior: Prior
    info_rate: float

    def __post_init__(self):
        if not self.info_rate > 0:
            raise ValueError("information rate must be positive")


@dataclass(frozen=True)
class LinearPayoff:
    """``constant + weights . x``; lets the pricing integral factorise across factors."""

    weights: tuple[float, ...]
    constant: float = 0.0

    def __call__(self, *xs):
        out = self.constant
        for w, x in zip(self.weights, xs):
            out = out + w * np.asarray(x)
        return out


@dataclass(frozen=True)
class InfoModelSpec:
    horizon: float
    factors: tuple[Factor, ...]
    payoffs: tuple = ()
    gamma_tilde: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        object.__setattr__(self, "factors", tuple(self.factors))
        payoffs = tuple(self.payoffs) or (LinearPayoff((1.0,) * len(self.factors)),)
        object.__setattr__(self, "payoffs", payoffs)
        gt = tuple(float(g) for g in (self.gamma_tilde or (0.0,) * len(payoffs)))
        if len(gt) != len(payoffs):
            raise ValueError("gamma_tilde length must match payoffs")
        object.__setattr__(self, "gamma_tilde", gt)
        for p in payoffs:
            if isinstance(p, LinearPayoff) and len(p.weights) != len(self.factors):
                raise ValueError("linear payoff weights must match the number of factors")

    @property
    def linear(self) -> bool:
        return all(isinstance(p, LinearPayoff) for p in self.payoffs)

    def tilt_coefficients(self) -> np.ndarray:
        """Per-factor ``c_i`` with ``z = exp(-const - c . x)`` when all payoffs are linear."""
        c = np.zeros(len(self.factors))
        for g, p in zip(self.gamma_tilde, self.payoffs):
            c += g * np.asarray(p.weights)
        return c


@dataclass(frozen=True)
class InfoPathState:
    t: float
    xi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xi", np.atleast_1d(np.asarray(self.xi, dtype=float)))


@dataclass(frozen=True)
class ConditionalDensity:
    """Posterior of one factor as quadrature masses on ``x``.

    ``mass`` sums to one; for continuous priors ``density`` holds the
    normalised density values and ``mass = quad_weights * density``.
    """

    x: np.ndarray
    mass: np.ndarray
    density: Optional[np.ndarray] = None
    quad_weights: Optional[np.ndarray] = field(default=None, repr=False)

    def normalization(self) -> float:
        if self.density is None:
            return float(self.mass.sum())
        return float(np.sum(self.quad_weights * self.density))

    def expect(self, fn) -> float:
        return float(np.sum(self.mass * fn(self.x)))

    def mean_var(self) -> tuple[float, float]:
        m = float(np.sum(self.mass * self.x))
        return m, float(max(np.sum(self.mass * (self.x - m) ** 2), 0.0))


# -- posterior machinery -----------------------------------------------------------------


def _check_time(T: float, t: float):
    if t < 0:
        raise ValueError("t must be non-negative")
    if t >= T * (1 - TERMINAL_GUARD):
        raise DegenerateTime(f"t={t} is at the horizon T={T}")


def _likelihood_exponent(x, sigma: float, T: float, t: float, xi):
    return T / (T - t) * (sigma * x * xi - 0.5 * (sigma * x) ** 2 * t)


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    dx = np.diff(x)
    w = np.zeros_like(x)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


def _simpson_weights(x: np.ndarray) -> np.ndarray:
    # uniform grid with an odd number of points
    h = x[1] - x[0]
    w = np.full(x.size, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * h / 3


def _exponential_grid(kappa: float, sigma: float, T: float, t: float, xi: float, tilt: float, n: int = 8001):
    """Grid on ``[0, hi]`` where the tilted log-posterior has fallen 45 below its peak."""
    a = sigma**2 * t * T / (T - t)
    b = sigma * T * xi / (T - t) - (tilt * kappa + 1) / kappa
    if a == 0 and b >= 0:
        raise IntegrabilityViolation("tilted exponential prior is not integrable (gamma_tilde + 1/kappa <= 0)")
    peak_x = max(b / a, 0.0) if a > 0 else 0.0
    peak = b * peak_x - 0.5 * a * peak_x**2
    # grow the upper edge from a tiny width so concentrated posteriors still get a fine grid
    hi = peak_x + 1e-6 * (1 + peak_x)
    while b * hi - 0.5 * a * hi * hi > peak - 45:
        hi = peak_x + 2 * (hi - peak_x)
    return np.linspace(0.0, hi, n)


def _log_prior(prior: Prior, x: np.ndarray) -> np.ndarray:
    if isinstance(prior, DiscretePrior):
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(prior.probs))
    if isinstance(prior, ExponentialPrior):
        return -x / prior.kappa - np.log(prior.kappa)
    with np.errstate(divide="ignore"):
        return np.log(prior.density)


def _support(factor: Factor, T: float, t: float, xi: float, tilt: float) -> np.ndarray:
    prior = factor.prior
    if isinstance(prior, DiscretePrior):
        return np.asarray(prior.points)
    if isinstance(prior, ExponentialPrior):
        return _exponential_grid(prior.kappa, factor.info_rate, T, t, xi, tilt)
    return prior.x


def _posterior(factor: Factor, T: float, t: float, xi: float, tilt: float = 0.0, check: bool = True) -> ConditionalDensity:
    """Posterior tilted by ``exp(-tilt x)`` (``tilt = 0``: the plain filter)."""
    prior = factor.prior
    x = _support(factor, T, t, xi, tilt)
    logw = _log_prior(prior, x) + _likelihood_exponent(x, factor.info_rate, T, t, xi) - tilt * x
    if isinstance(prior, DiscretePrior):
        mass = np.exp(logw - logsumexp(logw))
        return ConditionalDensity(x, mass)
    # the exponential prior gets its own uniform grid, where Simpson's rule is exact enough;
    # tabulated priors are integrated by the trapezoid rule on the supplied abscissae
    tw = _simpson_weights(x) if isinstance(prior, ExponentialPrior) else _trapezoid_weights(x)
    with np.errstate(divide="ignore"):
        log_mass = logw + np.log(tw)
    lse = logsumexp(log_mass)
    mass = np.exp(log_mass - lse)
    density = np.exp(logw - lse)
    post = ConditionalDensity(x, mass, density, tw)
    if check and isinstance(prior, GridPrior):
        _check_coverage(post, prior, tilt)
    return post


def _check_coverage(post: ConditionalDensity, prior: GridPrior, tilt: float):
    m, v = post.mean_var()
    sd = np.sqrt(v)
    lo_ok = prior.hard_lower or post.x[0] <= m - COVERAGE_SDS * sd
    hi_ok = prior.hard_upper or post.x[-1] >= m + COVERAGE_SDS * sd
    if not (lo_ok and hi_ok):
        raise IntegrabilityViolation(
            f"grid [{post.x[0]:.4g}, {post.x[-1]:.4g}] does not cover mean {m:.4g} +- {COVERAGE_SDS:g} sd ({sd:.3g})"
            f" of the posterior tilted by {tilt:g}; the tilted prior may not be integrable"
        )


def conditional_density(spec: InfoModelSpec, i: int, state: InfoPathState) -> ConditionalDensity:
    """Posterior of factor ``i`` given its information value at ``state``."""
    _check_time(spec.horizon, state.t)
    return _posterior(spec.factors[i], spec.horizon, state.t, float(state.xi[i]))


# -- pricing ------------------------------------------------------------------------


def _check_exponential_tilt(prior: Prior, tilt: float):
    if isinstance(prior, ExponentialPrior) and not tilt + 1.0 / prior.kappa > 0:
        raise IntegrabilityViolation(f"need gamma_tilde + 1/kappa > 0, got {tilt} + {1.0 / prior.kappa}")


def price(spec: InfoModelSpec, state: InfoPathState) -> np.ndarray:
    """Equilibrium price of every payoff at ``state``.

    Linear payoffs factorise: the price is the payoff evaluated at the tilted
    posterior means.  Other payoffs use a tensor grid over at most three factors.
    """
    _check_time(spec.horizon, state.t)
    T, t = spec.horizon, state.t
    if spec.linear:
        c = spec.tilt_coefficients()
        means = []
        for i, f in enumerate(spec.factors):
            _check_exponential_tilt(f.prior, c[i])
            if isinstance(f.prior, ExponentialPrior):
                means.append(float(exponential_moments(f.prior.kappa, f.info_rate, T, c[i], t, state.xi[i])[0]))
            else:
                means.append(_posterior(f, T, t, float(state.xi[i]), c[i]).mean_var()[0])
        return np.array([p(*means) for p in spec.payoffs], dtype=float)

    n = len(spec.factors)
    if n > 3:
        raise ValueError("non-linear payoffs are supported for at most three factors")
    posts = [_posterior(f, T, t, float(state.xi[i])) for i, f in enumerate(spec.factors)]
    grids = np.meshgrid(*[p.x for p in posts], indexing="ij")
    mass = posts[0].mass
    for p in posts[1:]:
        mass = np.multiply.outer(mass, p.mass)
    f_vals = [np.broadcast_to(np.asarray(p(*grids), dtype=float), grids[0].shape) for p in spec.payoffs]
    log_z = -sum(g * f for g, f in zip(spec.gamma_tilde, f_vals))
    with np.errstate(divide="ignore"):
        log_w = log_z + np.log(mass)
    w = np.exp(log_w - logsumexp(log_w))
    return np.array([float(np.sum(w * f)) for f in f_vals])


def tilted_density(prior: Prior, gamma_tilde: float) -> Prior:
    """Prior reweighted by ``exp(-gamma_tilde x)`` and renormalised."""
    g = float(gamma_tilde)
    if isinstance(prior, ExponentialPrior):
        _check_exponential_tilt(prior, g)
        return ExponentialPrior(prior.kappa / (g * prior.kappa + 1))
    if isinstance(prior, DiscretePrior):
        logw = np.log(np.asarray(prior.probs)) - g * np.asarray(prior.points)
        return DiscretePrior(prior.points, tuple(np.exp(logw - logsumexp(logw))))
    logd = _log_prior(prior, prior.x) - g * prior.x
    d = np.exp(logd - np.max(logd))
    d = d / np.trapezoid(d, prior.x)
    tilted = GridPrior(prior.x, d, prior.hard_lower, prior.hard_upper)
    tw = _trapezoid_weights(prior.x)
    post = ConditionalDensity(prior.x, d * tw, d, tw)
    _check_coverage(post, tilted, g)
    return tilted


def binary_bond_price(spec: InfoModelSpec, state: InfoPathState) -> float:
    """Defaultable bond paying ``x_1`` or ``x_0 = 0`` with prior ``p_1 = P[X = x_1]``."""
    _check_time(spec.horizon, state.t)
    if len(spec.factors) != 1 or len(spec.payoffs) != 1:
        raise ValueError("binary bond needs a single factor and payoff")
    f = spec.factors[0]
    if not isinstance(f.prior, DiscretePrior) or len(f.prior.points) != 2 or f.prior.points[0] != 0.0:
        raise ValueError("binary bond needs a two-point prior {0, x1}")
    return float(binary_bond_path(f.prior.probs[1], f.prior.points[1], f.info_rate, spec.horizon,
                                  spec.gamma_tilde[0], state.t, state.xi[0]))


def binary_bond_path(p1: float, x1: float, sigma: float, T: float, gamma_tilde: float, t, xi):
    """Vectorised bond price in ``(t, xi)``: ``x1 * sigmoid(log-odds)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t >= T * (1 - TERMINAL_GUARD)):
        raise DegenerateTime("t at the horizon")
    log_odds = np.log(p1) - np.log1p(-p1) - gamma_tilde * x1 + _likelihood_exponent(x1, sigma, T, t, np.asarray(xi))
    return x1 * expit(log_odds)


def _truncated_normal_moments(a, b):
    """Mean and variance of the density ``~ exp(b x - a x^2 / 2)`` on ``x >= 0`` (``a > 0``)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    sd = 1 / np.sqrt(a)
    z = b * sd  # standardised location of the untruncated mean
    # phi(z) / Phi(z) without underflow for very negative z
    mills = 2 / (_SQRT_2PI * erfcx(-z / np.sqrt(2)))
    mean = b / a + sd * mills
    var = (1 - mills * (z + mills)) / a
    # deep in the left tail both forms cancel; the asymptotic series in 1/z^2 does not
    tail = z < -_TAIL_Z
    if np.any(tail):
        zt = np.where(tail, z, -_TAIL_Z)
        y = 1 / zt**2
        mean = np.where(tail, -sd / zt * np.polyval(_MEAN_SERIES[::-1], y), mean)
        var = np.where(tail, y / a * np.polyval(_VAR_SERIES[::-1], y), var)
    return mean, var


def exponential_moments(kappa: float, sigma: float, T: float, gamma_tilde: float, t, xi):
    """Tilted posterior mean and variance for the exponential prior (vectorised; ``t = 0`` allowed)."""
    if not gamma_tilde + 1.0 / kappa > 0:
        raise IntegrabilityViolation(f"need gamma_tilde + 1/kappa > 0, got {gamma_tilde} + {1.0 / kappa}")
    t = np.asarray(t, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if np.any(t >= T * (1 - TERMINAL_GUARD)):
        raise DegenerateTime("t at the horizon")
    rate = (gamma_tilde * kappa + 1) / kappa
    a = sigma**2 * t * T / (T - t)
    b = sigma * T * xi / (T - t) - rate
    at_zero = a == 0
    a_safe = np.where(at_zero, 1.0, a)
    mean, var = _truncated_normal_moments(a_safe, b)
    mean = np.where(at_zero, 1 / rate, mean)
    var = np.where(at_zero, 1 / rate**2, var)
    return mean, var


def exponential_price(spec: InfoModelSpec, state: InfoPathState) -> float:
    """Closed-form price for an exponential prior and the payoff ``X``.

    ``S = B/A + exp(-B^2/(2A)) / (sqrt(2 pi A) N(B / sqrt(A)))`` with
    ``A = sigma^2 t T/(T-t)``, ``B = sigma T xi/(T-t) - (gamma_tilde kappa + 1)/kappa``:
    the mean of a Gaussian truncated to ``x >= 0``.
    """
    f = spec.factors[0]
    if len(spec.factors) != 1 or not isinstance(f.prior, ExponentialPrior):
        raise ValueError("exponential_price needs a single factor with an exponential prior")
    if state.t == 0:
        raise DegenerateTime("formula is singular at t = 0; the price there is kappa / (gamma_tilde kappa + 1)")
    _check_time(spec.horizon, state.t)
    mean, _ = exponential_moments(f.prior.kappa, f.info_rate, spec.horizon, spec.gamma_tilde[0], state.t, state.xi[0])
    return float(mean)


# -- moments along paths -------------------------------------------------------------


def posterior_moments(spec: InfoModelSpec, t, xi, tilt: float = 0.0):
    """Posterior mean and variance of the single factor, vectorised over ``(t, xi)``."""
    if len(spec.factors) != 1:
        raise ValueError("posterior_moments needs a single factor")
    f = spec.factors[0]
    T = spec.horizon
    t_arr, xi_arr = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(xi, dtype=float))
    if np.any(t_arr >= T * (1 - TERMINAL_GUARD)):
        raise DegenerateTime("t at the horizon")
    if isinstance(f.prior, ExponentialPrior):
        return exponential_moments(f.prior.kappa, f.info_rate, T, tilt, t_arr, xi_arr)
    if isinstance(f.prior, DiscretePrior):
        pts = np.asarray(f.prior.points)
        logw = (np.log(np.asarray(f.prior.probs)) + _likelihood_exponent(pts, f.info_rate, T, t_arr[..., None],
                                                                         xi_arr[..., None]) - tilt * pts)
        w = np.exp(logw - logsumexp(logw, axis=-1, keepdims=True))
        mean = w @ pts
        return mean, np.maximum(w @ pts**2 - mean**2, 0.0)
    mean = np.empty(t_arr.shape)
    var = np.empty(t_arr.shape)
    for idx in np.ndindex(t_arr.shape):
        mean[idx], var[idx] = _posterior(f, T, float(t_arr[idx]), float(xi_arr[idx]), tilt).mean_var()
    return mean, var


# -- simulation --------------------------------------------------------------------------

_CHUNK = 8192


@dataclass(frozen=True)
class InfoPaths:
    times: np.ndarray
    xi: np.ndarray  # (n_paths, n_times, n_factors)
    factors: np.ndarray  # (n_paths, n_factors)

    def states(self, path: int = 0) -> list[InfoPathState]:
        return [InfoPathState(float(t), self.xi[path, j]) for j, t in enumerate(self.times)]


def _draw_prior(prior: Prior, rng: np.random.Generator, n: int) -> np.ndarray:
    if isinstance(prior, DiscretePrior):
        return rng.choice(np.asarray(prior.points), size=n, p=np.asarray(prior.probs))
    if isinstance(prior, ExponentialPrior):
        return rng.exponential(prior.kappa, size=n)
    cdf = np.concatenate(([0.0], np.cumsum(np.diff(prior.x) * 0.5 * (prior.density[1:] + prior.density[:-1]))))
    return np.interp(rng.uniform(0.0, cdf[-1], size=n), cdf, prior.x)


def simulate_information_paths(spec: InfoModelSpec, true_factors=None, time_grid: Sequence[float] = (),
                               seed: int = 0, n_paths: int = 1) -> InfoPaths:
    """Sample ``xi`` on ``time_grid`` using exact Brownian-bridge transitions.

    ``true_factors`` fixes the factor values (shape ``(n_factors,)`` or
    ``(n_paths, n_factors)``); ``None`` draws them from the priors.  Paths are
    generated in chunks with independent child seeds, so results depend only
    on ``seed`` and ``n_paths``.
    """
    T = spec.horizon
    times = np.asarray(time_grid, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise InvalidGrid("time grid must be a non-empty 1-d sequence")
    if np.any(times < 0) or np.any(times >= T):
        raise InvalidGrid("time grid must lie in [0, T)")
    if np.any(np.diff(times) <= 0):
        raise InvalidGrid("time grid must be strictly increasing")
    nf = len(spec.factors)
    sigma = np.array([f.info_rate for f in spec.factors])
    n_chunks = -(-n_paths // _CHUNK)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    xs, bridges = [], []
    for c, child in enumerate(children):
        rng = np.random.default_rng(child)
        m = min(_CHUNK, n_paths - c * _CHUNK)
        if true_factors is None:
            x = np.stack([_draw_prior(f.prior, rng, m) for f in spec.factors], axis=-1)
        else:
            tf = np.asarray(true_factors, dtype=float)
            x = np.broadcast_to(tf if tf.ndim == 1 else tf[c * _CHUNK: c * _CHUNK + m], (m, nf)).copy()
        beta = np.zeros((m, times.size, nf))
        prev_t, prev_b = 0.0, np.zeros((m, nf))
        for j, t in enumerate(times):
            if t > prev_t:
                # bridge transition: mean scales by (T-t)/(T-s), variance (t-s)(T-t)/(T-s)
                mean = prev_b * (T - t) / (T - prev_t)
                var = (t - prev_t) * (T - t) / (T - prev_t)
                prev_b = mean + np.sqrt(var) * rng.standard_normal((m, nf))
            beta[:, j] = prev_b
            prev_t = t
        xs.append(x)
        bridges.append(beta)
    x = np.concatenate(xs)
    beta = np.concatenate(bridges)
    xi = sigma * x[:, None, :] * times[None, :, None] + beta
    return InfoPaths(times, xi, x)


# -- innovations and dynamics ------------------------------------------------------------


@dataclass(frozen=True)
class InnovationSeries:
    """Per-step quantities on ``times[:-1]`` (left endpoints) for one or many paths."""

    times: np.ndarray
    dt: np.ndarray
    dW: np.ndarray
    var_q: np.ndarray
    filter_mean: np.ndarray
    price: np.ndarray
    d_price: np.ndarray
    rate: np.ndarray = field(repr=False)  # sigma T / (T - t)


def innovation_and_variance(spec: InfoModelSpec, times, xi) -> InnovationSeries:
    """Discretised innovation increments and the conditional Q-variance along sampled paths.

    ``xi`` has time on its last axis.  ``dW = d xi - (sigma T E[X|F_t] - xi)/(T - t) dt``
    uses the plain (P) filter; ``VarQ`` is the posterior variance tilted by
    ``gamma_tilde``.
    """
    if len(spec.factors) != 1 or len(spec.payoffs) != 1:
        raise ValueError("innovations are defined for one factor and one payoff")
    p = spec.payoffs[0]
    if not (isinstance(p, LinearPayoff) and p.weights == (1.0,) and p.constant == 0.0):
        raise ValueError("innovation dynamics assume the payoff X")
    T = spec.horizon
    sigma = spec.factors[0].info_rate
    g = spec.gamma_tilde[0]
    times = np.asarray(times, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if np.any(times >= T * (1 - TERMINAL_GUARD)):
        raise DegenerateTime("innovations need every time strictly before T")
    m_p, _ = posterior_moments(spec, times, xi, 0.0)
    s_q, v_q = posterior_moments(spec, times, xi, g)
    dt = np.diff(times)
    left = times[:-1]
    drift = (sigma * T * m_p[..., :-1] - xi[..., :-1]) / (T - left)
    dW = np.diff(xi, axis=-1) - drift * dt
    return InnovationSeries(left, dt, dW, v_q[..., :-1], m_p[..., :-1], s_q[..., :-1], np.diff(s_q, axis=-1),
                            sigma * T / (T - left))


def sde_residuals(series: InnovationSeries) -> np.ndarray:
    """``dS - k VarQ [k (E[X|F_t] - S) dt + dW]`` with ``k = sigma T / (T - t)``."""
    k = series.rate
    return series.d_price - k * series.var_q * (k * (series.filter_mean - series.price) * series.dt + series.dW)
