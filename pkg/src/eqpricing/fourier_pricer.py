"""Fourier pricing of stock and call options under an exponential-tilt pricing kernel.

For payoffs ``f^k(X_T)`` and adjusted risk aversion ``gamma_tilde`` the price is

    S^k_t = E[f^k(X_T) exp(-gamma_tilde . f(X_T)) | Y_t] / E[exp(-gamma_tilde . f(X_T)) | Y_t].

Both expectations are written as inverse Fourier integrals of damped weight
functions ``g^k(x) = exp(alpha^k x) f^k(x) exp(-gamma_tilde . f(x))`` and
``h(x) = exp(beta x) exp(-gamma_tilde . f(x))`` against the extended affine
transform, e.g.

    E[f^k e^{-gamma_tilde . f}] = (1/2pi) int exp(phi(tau, -alpha^k + is) + psi . Y) g^k_hat(s) ds.

Stocks and calls make ``gamma_tilde . f`` piecewise linear in ``x`` with kinks
at the strikes, so every transform is a finite sum of integrals of
``(p x + q) exp(w x)`` over intervals.  :func:`piecewise_transform` evaluates
that sum for any tilt vector; :func:`transform_multi_option` and friends are
the closed forms for a stock plus ``N`` calls sharing one risk aversion.

Point masses of ``X_T`` (the no-jump event of the OU-jump model, or ``tau = 0``)
are split off: the transform minus the atom decays in ``s``, and the atom's
contribution is added back exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .affine_core import FunctionalCharacteristics, riccati_explosion_time, riccati_integrate
from .equilibrium import Call, Linear, MarketSpec, adjusted_risk_aversion
from .errors import DomainViolation, InvalidDamping, NonRealResult, PoleEncountered, QuadratureNotConverged
from .quadrature import QuadratureConfig, integrate_half_line

TWO_PI = 2.0 * np.pi


# -- damping -----------------------------------------------------------------


@dataclass(frozen=True)
class DampingWindow:
    lower: float  # -inf when the weight vanishes on the left tail
    upper: float

    def contains(self, value: float) -> bool:
        return self.lower < value < self.upper


@dataclass(frozen=True)
class DampingPlan:
    """Damping exponents: ``alphas[k]`` for each security, ``beta`` for the normaliser."""

    alphas: tuple[float, ...]
    beta: float

    @classmethod
    def default(cls, market: MarketSpec, gamma_tilde: Optional[Sequence[float]] = None) -> "DampingPlan":
        """Window midpoints for the stock and the normaliser; ``0`` for calls when admissible.

        For a stock plus ``N`` calls with common ``gamma`` this is
        ``alpha = beta = (N + 2) gamma / 2``.
        """
        gt = _tilde(market, gamma_tilde)
        windows, h_window = damping_windows(market, gt)
        alphas = []
        for p, w in zip(market.payoffs, windows):
            if isinstance(p, Call):
                alphas.append(0.0 if w.contains(0.0) else w.upper - 1.0)
            else:
                alphas.append(0.5 * (w.lower + w.upper))
        return cls(tuple(alphas), 0.5 * (h_window.lower + h_window.upper))

    def validate(self, market: MarketSpec, gamma_tilde: Optional[Sequence[float]] = None):
        gt = _tilde(market, gamma_tilde)
        windows, h_window = damping_windows(market, gt)
        if len(self.alphas) != len(market.payoffs):
            raise InvalidDamping("need one alpha per security")
        for k, (a, w) in enumerate(zip(self.alphas, windows)):
            if not w.contains(a):
                raise InvalidDamping(f"alpha[{k}]={a} outside ({w.lower}, {w.upper})")
        if not h_window.contains(self.beta):
            raise InvalidDamping(f"beta={self.beta} outside ({h_window.lower}, {h_window.upper})")


def _tilde(market: MarketSpec, gamma_tilde) -> np.ndarray:
    if gamma_tilde is None:
        return adjusted_risk_aversion(market).tilde_gamma
    gt = np.asarray(gamma_tilde, dtype=float)
    if gt.shape != (len(market.payoffs),):
        raise ValueError("gamma_tilde length must match payoffs")
    return gt


def _pieces(payoffs: Sequence, zeta: np.ndarray):
    """Breakpoints and per-interval linear coefficients.

    Returns ``edges`` (with +-inf ends), ``slope[j], const[j]`` of ``zeta . f``
    on interval ``j`` and ``coef[k][j] = (p, q)`` of ``f^k``.
    """
    strikes = sorted({p.strike for p in payoffs if isinstance(p, Call)})
    edges = [-np.inf, *strikes, np.inf]
    mids = [_interval_probe(edges[j], edges[j + 1]) for j in range(len(edges) - 1)]
    coef = []
    for p in payoffs:
        row = []
        for m in mids:
            if isinstance(p, Linear):
                row.append((1.0, 0.0))
            elif m > p.strike:
                row.append((1.0, -p.strike))
            else:
                row.append((0.0, 0.0))
        coef.append(row)
    slope = [sum(z * coef[k][j][0] for k, z in enumerate(zeta)) for j in range(len(mids))]
    const = [sum(z * coef[k][j][1] for k, z in enumerate(zeta)) for j in range(len(mids))]
    return edges, np.array(slope), np.array(const), coef


def _interval_probe(lo: float, hi: float) -> float:
    if np.isinf(lo) and np.isinf(hi):
        return 0.0
    if np.isinf(lo):
        return hi - 1.0
    if np.isinf(hi):
        return lo + 1.0
    return 0.5 * (lo + hi)


def damping_windows(market: MarketSpec, gamma_tilde) -> tuple[list[DampingWindow], DampingWindow]:
    """Open intervals of admissible damping for each security and for the normaliser.

    The weight ``exp(d x) f(x) exp(-zeta . f(x))`` is integrable iff
    ``d - slope_left > 0`` (unless it vanishes on the left tail) and
    ``d - slope_right < 0``.
    """
    gt = np.asarray(gamma_tilde, dtype=float)
    _, slope, _, coef = _pieces(market.payoffs, gt)
    left, right = slope[0], slope[-1]
    windows = []
    for k in range(len(market.payoffs)):
        vanishes_left = coef[k][0] == (0.0, 0.0)
        windows.append(DampingWindow(-np.inf if vanishes_left else left, right))
    return windows, DampingWindow(left, right)


# -- transforms ----------------------------------------------------------------


@dataclass(frozen=True)
class DampedTransform:
    """A damped weight ``spatial(x)`` and its transform ``evaluator(s)``.

    ``bound = (M_hat, z_hat)`` with ``|evaluator(s)| <= M_hat / (s^2 + z_hat)``.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    spatial: Callable[[np.ndarray], np.ndarray]
    damping: float
    bound: tuple[float, float] = field(default=(np.inf, 1.0))

    def __call__(self, s):
        return self.evaluator(np.asarray(s, dtype=float))


def _e1(z):
    # (e^z - 1) / z
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    return np.where(small, 1 + z / 2 + z * z / 6 + z**3 / 24, np.expm1(zs) / zs)


def _e2(z):
    # (e^z (z - 1) + 1) / z^2 = int_0^1 y e^{zy} dy
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    return np.where(small, 0.5 + z / 3 + z * z / 8 + z**3 / 30, (np.exp(zs) * (zs - 1) + 1) / (zs * zs))


def _segment(w, p: float, q: float, lo: float, hi: float):
    """``int_lo^hi (p x + q) exp(w x) dx`` for complex ``w`` (vectorised)."""
    if np.isinf(lo) and np.isinf(hi):
        raise InvalidDamping("weight is a pure exponential; its transform does not exist")
    if np.isinf(hi):
        if np.any(w.real >= 0):
            raise InvalidDamping("weight does not decay on the right tail")
        return -np.exp(w * lo) * ((p * lo + q) / w - p / (w * w))
    if np.isinf(lo):
        if np.any(w.real <= 0):
            raise InvalidDamping("weight does not decay on the left tail")
        return np.exp(w * hi) * ((p * hi + q) / w - p / (w * w))
    d = hi - lo
    z = w * d
    return np.exp(w * lo) * ((p * lo + q) * d * _e1(z) + p * d * d * _e2(z))


def piecewise_transform(payoffs: Sequence, zeta, damping: float, k: Optional[int] = None) -> DampedTransform:
    """Transform of ``exp(damping x) f^k(x) exp(-zeta . f(x))`` (``k=None``: drop ``f^k``)."""
    zeta = np.asarray(zeta, dtype=float)
    edges, slope, const, coef = _pieces(payoffs, zeta)
    n = len(slope)
    for j in (0, n - 1):
        nonzero = k is None or coef[k][j] != (0.0, 0.0)
        if not nonzero:
            continue
        if j == 0 and not damping - slope[0] > 0:
            raise InvalidDamping(f"damping {damping} must exceed left slope {slope[0]}")
        if j == n - 1 and not damping - slope[-1] < 0:
            raise InvalidDamping(f"damping {damping} must be below right slope {slope[-1]}")

    def evaluator(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape, dtype=complex)
        for j in range(n):
            p, q = (0.0, 1.0) if k is None else coef[k][j]
            if p == 0.0 and q == 0.0:
                continue
            w = damping - slope[j] - 1j * s
            out += np.exp(-const[j]) * _segment(w, p, q, edges[j], edges[j + 1])
        return out

    def spatial(x):
        x = np.asarray(x, dtype=float)
        f = np.stack([p.evaluate(x) for p in payoffs], axis=-1)
        base = np.exp(damping * x - f @ zeta)
        return base if k is None else base * f[..., k]

    relevant = [slope[0]] if (k is None or coef[k][0] != (0.0, 0.0)) else []
    relevant.append(slope[-1])
    return DampedTransform(evaluator, spatial, damping, _estimate_bound(evaluator, damping, relevant))


def _estimate_bound(evaluator, damping: float, slopes) -> tuple[float, float]:
    gap = min(abs(damping - a) for a in slopes)
    z_hat = gap * gap
    # s = 0 is skipped: the closed forms have removable singularities there when the damping hits j*gamma
    s = np.geomspace(1e-3, 1e6, 400)
    with np.errstate(divide="ignore", invalid="ignore"):
        m_hat = float(np.nanmax(np.abs(evaluator(s)) * (s * s + z_hat)))
    return 1.5 * m_hat, z_hat


def _check_multi(gamma: float, strikes: Sequence[float]):
    strikes = np.asarray(strikes, dtype=float)
    if strikes.ndim != 1 or strikes.size < 1:
        raise ValueError("need at least one strike")
    if np.any(np.diff(strikes) <= 0):
        raise ValueError("strikes must be strictly increasing")
    if not gamma > 0:
        raise InvalidDamping("the closed-form transforms need gamma > 0")
    return strikes


def transform_multi_option(gamma: float, strikes: Sequence[float], kind: str, damping: float = 0.0, k: Optional[int] = None) -> DampedTransform:
    """Closed-form transforms for one stock and ``N`` calls, all with adjusted risk aversion ``gamma``.

    ``kind`` is ``"G"`` (stock, damping ``alpha``), ``"H"`` (normaliser,
    damping ``beta``) or ``"Gk"`` (call ``k``, 1-based, undamped).  The
    stock and normaliser damping must lie in ``(gamma, (N + 1) gamma)``.
    """
    K = _check_multi(gamma, strikes)
    N = K.size
    # exp(gamma * sum_{h<j} K_h) for j = 1..N
    pre = np.exp(gamma * np.concatenate(([0.0], np.cumsum(K)[:-1])))
    if kind in ("G", "H") and not gamma < damping < (N + 1) * gamma:
        raise InvalidDamping(f"damping {damping} outside ({gamma}, {(N + 1) * gamma})")

    if kind == "G":
        a = damping

        def ev(s):
            s = np.asarray(s, dtype=float)[..., None]
            j = np.arange(1, N + 1)
            w0 = -1j * s + a - j * gamma
            w1 = -1j * s + a - (j + 1) * gamma
            term = -K * gamma / (w0 * w1) + (1 / w1**2 - 1 / w0**2)
            return np.sum(pre * np.exp(w0 * K) * term, axis=-1)

        payoff_k = 0
    elif kind == "H":
        b = damping

        def ev(s):
            s = np.asarray(s, dtype=float)[..., None]
            j = np.arange(1, N + 1)
            w0 = -1j * s + b - j * gamma
            w1 = -1j * s + b - (j + 1) * gamma
            return np.sum(pre * np.exp(w0 * K) * (-gamma / (w0 * w1)), axis=-1)

        payoff_k = None
    elif kind == "Gk":
        if k is None or not 1 <= k <= N:
            raise ValueError("kind 'Gk' needs 1 <= k <= N")
        if damping != 0.0:
            raise InvalidDamping("the closed-form call transform is undamped")

        def ev(s):
            s = np.asarray(s, dtype=float)
            out = pre[k - 1] * np.exp((-1j * s - k * gamma) * K[k - 1]) / (-1j * s - (k + 1) * gamma) ** 2
            for j in range(k + 1, N + 1):
                w0 = -1j * s - j * gamma
                w1 = -1j * s - (j + 1) * gamma
                term = -(K[j - 1] - K[k - 1]) * gamma / (w0 * w1) + (1 / w1**2 - 1 / w0**2)
                out = out + pre[j - 1] * np.exp(w0 * K[j - 1]) * term
            return out

        payoff_k = k
    else:
        raise ValueError(f"unknown transform kind {kind!r}")

    payoffs = (Linear(), *[Call(float(x)) for x in K])
    zeta = np.full(N + 1, gamma)
    spatial = piecewise_transform(payoffs, zeta, damping, payoff_k).spatial
    slopes = [gamma, (N + 1) * gamma] if kind != "Gk" else [(N + 1) * gamma]
    return DampedTransform(ev, spatial, damping, _estimate_bound(ev, damping, slopes))


def transform_single_option(gamma: float, strike: float, kind: str, damping: float = 0.0) -> DampedTransform:
    """One stock and one call: the ``N = 1`` forms, written out directly."""
    K = float(strike)
    if kind in ("G", "H") and not gamma < damping < 2 * gamma:
        raise InvalidDamping(f"damping {damping} outside ({gamma}, {2 * gamma})")
    if kind == "G":
        a = damping

        def ev(s):
            s = np.asarray(s, dtype=float)
            w0 = a - gamma - 1j * s
            w1 = a - 2 * gamma - 1j * s
            return np.exp(w0 * K) * (-K * gamma / (w0 * w1) + (1 / w1**2 - 1 / w0**2))

    elif kind == "H":
        b = damping

        def ev(s):
            s = np.asarray(s, dtype=float)
            w0 = b - gamma - 1j * s
            return np.exp(w0 * K) * (-gamma / (w0 * (b - 2 * gamma - 1j * s)))

    elif kind == "G1":
        if damping != 0.0:
            raise InvalidDamping("the closed-form call transform is undamped")

        def ev(s):
            s = np.asarray(s, dtype=float)
            return np.exp(-(1j * s + gamma) * K) / (-1j * s - 2 * gamma) ** 2

    else:
        raise ValueError(f"unknown transform kind {kind!r}")
    base = transform_multi_option(gamma, [K], {"G": "G", "H": "H", "G1": "Gk"}[kind], damping, 1 if kind == "G1" else None)
    return DampedTransform(ev, base.spatial, damping, base.bound)


def transform_zero_supply(gamma_tilde: float, strike: float, alpha: float = 0.0) -> DampedTransform:
    """Transform of ``exp(alpha x) exp(-gamma_tilde x) (x - K)^+``; needs ``alpha < gamma_tilde``."""
    if not alpha < gamma_tilde:
        raise InvalidDamping(f"alpha={alpha} must be below gamma_tilde={gamma_tilde}")
    K = float(strike)

    def ev(s):
        w = alpha - gamma_tilde - 1j * np.asarray(s, dtype=float)
        return np.exp(w * K) / (w * w)

    def spatial(x):
        x = np.asarray(x, dtype=float)
        return np.exp((alpha - gamma_tilde) * x) * np.maximum(x - K, 0.0)

    return DampedTransform(ev, spatial, alpha, _estimate_bound(ev, alpha, [gamma_tilde]))


def is_common_gamma_config(market: MarketSpec, gamma_tilde) -> bool:
    """Stock first, then calls, every security with the same positive adjusted risk aversion."""
    gt = np.asarray(gamma_tilde, dtype=float)
    p = market.payoffs
    return (
        len(p) >= 2
        and isinstance(p[0], Linear)
        and all(isinstance(c, Call) for c in p[1:])
        and gt[0] > 0
        and np.all(gt == gt[0])
    )


# -- models --------------------------------------------------------------------


class RiccatiModel:
    """Model known only through its functional characteristics.

    The payoff factor is the last state component.  Transforms are obtained by
    numeric Riccati integration, one ODE solve per transform argument.
    """

    kind = "generic"
    closed_form = False

    def __init__(self, chars: FunctionalCharacteristics, state, horizon_cap: float = 100.0,
                 step_control: tuple[float, float] = (1e-12, 1e-14)):
        self.chars = chars
        self.state = np.asarray(state, dtype=float)
        if self.state.shape != (chars.dim,):
            raise ValueError("state length must match the model dimension")
        self.horizon_cap = horizon_cap
        self.step_control = step_control

    def default_state(self):
        return self.state

    def _u(self, u_x):
        u = np.zeros(self.chars.dim, dtype=complex)
        u[-1] = u_x
        return u

    def log_transform(self, tau, u_x, state):
        u_arr = np.asarray(u_x, dtype=complex)
        out = np.empty(u_arr.shape, dtype=complex)
        for idx, u in np.ndenumerate(u_arr):
            out[idx] = riccati_integrate(self.chars, tau, self._u(u), self.step_control).exponent(state)
        return out

    def explosion_time(self, u_x: float) -> float:
        return riccati_explosion_time(self.chars, self._u(u_x), self.horizon_cap)

    def atom(self, tau, state):
        if tau == 0:
            return 1.0, float(state[-1])
        return None

    def moments(self, tau, state):
        h = 1e-3
        vals = [self.log_transform(tau, k * h, state).real for k in (-2, -1, 0, 1, 2)]
        mean = (vals[0] - 8 * vals[1] + 8 * vals[3] - vals[4]) / (12 * h)
        var = (-vals[0] + 16 * vals[1] - 30 * vals[2] + 16 * vals[3] - vals[4]) / (12 * h * h)
        return float(mean), float(max(var, 0.0))


# -- pricing -------------------------------------------------------------------


@dataclass(frozen=True)
class RatioPrice:
    """Prices with their numerator and denominator expectations (``1/2pi`` included)."""

    prices: np.ndarray
    numerators: np.ndarray
    denominator: float
    error: np.ndarray
    truncation: float
    panels: int


def _tau_state(model, horizon: float, t: float, state):
    if not 0 <= t <= horizon:
        raise ValueError("need 0 <= t <= horizon")
    state = model.default_state() if state is None else np.asarray(state, dtype=float)
    return horizon - t, state


def _check_domain(model, tau: float, u_real: float):
    if tau == 0:
        return
    try:
        ok = tau < model.explosion_time(u_real)
    except PoleEncountered:
        ok = False
    if not ok:
        raise DomainViolation(f"(tau={tau}, u_x={u_real}) is outside the moment domain")


class _TransformTable:
    """Evaluates ``exp(log_transform)`` minus the atom part once per distinct damping."""

    def __init__(self, model, tau, state):
        self.model, self.tau, self.state = model, tau, state
        self.atom = model.atom(tau, state)
        self._nodes = None
        self._cache: dict[float, np.ndarray] = {}

    def __call__(self, damping: float, s: np.ndarray) -> np.ndarray:
        # columns of one integrand call share the node array; hold a reference so identity is safe
        if s is not self._nodes:
            self._nodes, self._cache = s, {}
        key = damping
        if key not in self._cache:
            u = -damping + 1j * s
            cf = np.exp(self.model.log_transform(self.tau, u, self.state))
            if self.atom is not None:
                weight, loc = self.atom
                cf = cf - weight * np.exp(u * loc)
            self._cache[key] = cf
        return self._cache[key]

    def atom_value(self, weight_fn) -> float:
        """Exact contribution of the point mass to ``E[weight(X_T)]``."""
        if self.atom is None:
            return 0.0
        w, loc = self.atom
        return float(w * weight_fn(np.array(loc)))


def _transforms_for(market: MarketSpec, gt: np.ndarray, plan: DampingPlan, closed: bool):
    K = len(market.payoffs)
    if closed:
        strikes = market.strikes
        g = gt[0]
        num = [transform_multi_option(g, strikes, "G", plan.alphas[0])]
        num += [transform_multi_option(g, strikes, "Gk", plan.alphas[k], k) for k in range(1, K)]
        den = transform_multi_option(g, strikes, "H", plan.beta)
    else:
        num = [piecewise_transform(market.payoffs, gt, plan.alphas[k], k) for k in range(K)]
        den = piecewise_transform(market.payoffs, gt, plan.beta, None)
    return num, den


def price_ratio(model, market: MarketSpec, damping: Optional[DampingPlan] = None,
                quad: QuadratureConfig = QuadratureConfig(), t: float = 0.0, state=None,
                gamma_tilde: Optional[Sequence[float]] = None, transforms: str = "auto") -> RatioPrice:
    """Price every security in ``market`` as a ratio of two Fourier integrals.

    ``transforms`` selects ``"closed_form"`` transforms (stock plus calls with a
    common adjusted risk aversion, undamped calls), ``"generic"`` piecewise
    transforms, or ``"auto"`` (closed forms when applicable).
    """
    tau, state = _tau_state(model, market.horizon, t, state)
    gt = _tilde(market, gamma_tilde)
    plan = damping or DampingPlan.default(market, gt)
    plan.validate(market, gt)
    for d in {*plan.alphas, plan.beta}:
        _check_domain(model, tau, -d)

    if transforms == "auto":
        closed = is_common_gamma_config(market, gt) and all(a == 0.0 for a in plan.alphas[1:])
    elif transforms in ("closed_form", "generic"):
        closed = transforms == "closed_form"
        if closed and not (is_common_gamma_config(market, gt) and all(a == 0.0 for a in plan.alphas[1:])):
            raise InvalidDamping("closed-form transforms need stock + calls, common gamma and undamped calls")
    else:
        raise ValueError(f"unknown transforms choice {transforms!r}")
    num_tf, den_tf = _transforms_for(market, gt, plan, closed)

    table = _TransformTable(model, tau, state)
    dampings = [*plan.alphas, plan.beta]
    tfs = [*num_tf, den_tf]

    def integrand(s):
        cols = [2.0 * (table(d, s) * tf(s)).real for d, tf in zip(dampings, tfs)]
        return np.stack(cols, axis=-1) / TWO_PI

    res = integrate_half_line(integrand, quad)
    f_of = market.payoff_vector
    atoms = [table.atom_value(lambda x, k=k: f_of(x)[..., k] * np.exp(-f_of(x) @ gt)) for k in range(len(num_tf))]
    atoms.append(table.atom_value(lambda x: np.exp(-f_of(x) @ gt)))
    total = res.value + np.array(atoms)
    num, den = total[:-1], float(total[-1])
    if not den > 0:
        raise QuadratureNotConverged(f"normaliser {den:.3e} is not positive")
    prices = num / den
    err = res.error[:-1] / den + np.abs(prices) * res.error[-1] / den
    return RatioPrice(prices, num, den, err, res.truncation, res.panels)


def price_gradient_form(model, market: MarketSpec, damping: Optional[DampingPlan] = None,
                        quad: QuadratureConfig = QuadratureConfig(), t: float = 0.0, state=None,
                        k: int = 0, gamma_tilde: Optional[Sequence[float]] = None) -> float:
    """``-dH/dzeta^k / H`` at ``zeta = gamma_tilde``, by central differences on shared nodes."""
    tau, state = _tau_state(model, market.horizon, t, state)
    gt = _tilde(market, gamma_tilde)
    plan = damping or DampingPlan.default(market, gt)
    h = 1e-5 * (1 + abs(gt[k]))
    zetas = [gt, gt + h * np.eye(len(gt))[k], gt - h * np.eye(len(gt))[k]]
    for z in zetas:
        if not damping_windows(market, z)[1].contains(plan.beta):
            raise InvalidDamping(f"beta={plan.beta} leaves the window near zeta={z}")
    _check_domain(model, tau, -plan.beta)
    tfs = [piecewise_transform(market.payoffs, z, plan.beta, None) for z in zetas]
    table = _TransformTable(model, tau, state)

    def integrand(s):
        cf = table(plan.beta, s)
        return np.stack([2.0 * (cf * tf(s)).real for tf in tfs], axis=-1) / TWO_PI

    res = integrate_half_line(integrand, quad)
    f_of = market.payoff_vector
    H = res.value + np.array([table.atom_value(lambda x, z=z: np.exp(-f_of(x) @ z)) for z in zetas])
    if not H[0] > 0:
        raise QuadratureNotConverged(f"H(gamma_tilde) = {H[0]:.3e} is not positive")
    return float(-(H[1] - H[2]) / (2 * h) / H[0])


def _contour_derivative(fn, u0: float, radius: float = 1e-3, n: int = 16) -> complex:
    """``f'(u0)`` from ``n`` samples on a circle (trapezoid rule for Cauchy's formula).

    Exact up to ``O(radius^n)`` plus roundoff ``~eps |f| / radius``; unlike the
    complex-step trick it needs no real intermediates, which the Heston
    formulas lack on the imaginary ``theta`` branch.
    """
    w = np.exp(2j * np.pi * np.arange(n) / n)
    vals = np.asarray(fn(u0 + radius * w), dtype=complex)
    return complex(np.mean(vals / w) / radius)


def price_linear_special(model, gamma_tilde_1: float, horizon: float, t: float = 0.0, state=None) -> float:
    """Stock price when it is the only security in non-zero adjusted supply.

    ``d/du_x [phi + psi . Y]`` at ``u_x = -gamma_tilde_1``: a contour-integral
    derivative for closed-form models, a fourth-order central difference of
    the numeric Riccati solution otherwise.
    """
    tau, state = _tau_state(model, horizon, t, state)
    u0 = -float(gamma_tilde_1)
    _check_domain(model, tau, u0)
    if tau == 0:
        return float(state[-1])
    if getattr(model, "closed_form", True):
        d = _contour_derivative(lambda u: model.log_transform(tau, u, state), u0)
        if abs(d.imag) > 1e-8 * max(1.0, abs(d.real)):
            raise NonRealResult(f"derivative has imaginary part {d.imag:.3e}")
        return float(d.real)
    h = 1e-3 * (1 + abs(u0))
    v = [model.log_transform(tau, u0 + j * h, state).real for j in (-2, -1, 1, 2)]
    return float((v[0] - 8 * v[1] + 8 * v[2] - v[3]) / (12 * h))


def price_zero_supply_option(model, gamma_tilde_1: float, strike: float, horizon: float,
                             quad: QuadratureConfig = QuadratureConfig(), t: float = 0.0, state=None,
                             alpha: float = 0.0) -> float:
    """Call on the stock when only the stock carries adjusted supply ``gamma_tilde_1``.

    The normaliser is the closed-form transform at ``u_x = -gamma_tilde_1``,
    so the integrand is ``exp(LT(-alpha + is) - LT(-gamma_tilde_1)) g_hat(s)``.
    """
    tau, state = _tau_state(model, horizon, t, state)
    g = float(gamma_tilde_1)
    tf = transform_zero_supply(g, strike, alpha)
    _check_domain(model, tau, -alpha)
    _check_domain(model, tau, -g)
    log_norm = complex(model.log_transform(tau, -g + 0j, state))
    if abs(log_norm.imag) > 1e-9 * max(1.0, abs(log_norm.real)):
        raise DomainViolation("normaliser transform is not real")
    table = _TransformTable(model, tau, state)
    scale = np.exp(-log_norm.real)

    def integrand(s):
        return 2.0 * (table(alpha, s) * tf(s)).real * scale / TWO_PI

    res = integrate_half_line(integrand, quad)
    atom = table.atom_value(lambda x: np.exp(-g * x) * np.maximum(x - strike, 0.0)) * scale
    return float(res.value + atom)


def price_market(model, market: MarketSpec, quad: QuadratureConfig = QuadratureConfig(), t: float = 0.0, state=None,
                 damping: Optional[DampingPlan] = None) -> np.ndarray:
    """Route to the cheapest valid formula.

    If no call carries adjusted supply, the tilt is linear: the stock uses the
    derivative formula and calls the zero-supply integral.  Otherwise the full
    ratio form is used.
    """
    gt = adjusted_risk_aversion(market).tilde_gamma
    calls_free = all(g == 0 for p, g in zip(market.payoffs, gt) if isinstance(p, Call))
    linear_idx = [k for k, p in enumerate(market.payoffs) if isinstance(p, Linear)]
    if calls_free and damping is None:
        g1 = float(sum(gt[k] for k in linear_idx))
        out = []
        for p in market.payoffs:
            if isinstance(p, Linear):
                out.append(price_linear_special(model, g1, market.horizon, t, state))
            else:
                out.append(price_zero_supply_option(model, g1, p.strike, market.horizon, quad, t, state,
                                                    alpha=0.0 if g1 > 0 else g1 - 1.0))
        return np.array(out)
    return price_ratio(model, market, damping, quad, t, state).prices
