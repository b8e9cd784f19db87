import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eqpricing.equilibrium import (AgentSpec, Call, Linear, MarketSpec, adjusted_risk_aversion, load_market,
                                   market_from_dict, market_risk_aversion, optimal_strategies, pricing_weight)
from eqpricing.errors import ConfigError, ExponentOverflow


def market(gammas, etas, n, payoffs=None):
    payoffs = payoffs or tuple(Linear() for _ in n)
    return MarketSpec(tuple(AgentSpec(g, 0.0, e) for g, e in zip(gammas, etas)), n, payoffs, 1.0)


def test_two_equal_agents():
    m = market([0.4, 0.4], [(0,), (0,)], (1,))
    adj = adjusted_risk_aversion(m)
    assert adj.gamma_market == pytest.approx(0.2)
    np.testing.assert_allclose(adj.tilde_gamma, [0.2])
    for th in optimal_strategies(m):
        np.testing.assert_allclose(th, [0.5])


def test_single_agent():
    m = market([0.6], [(0,)], (1,))
    np.testing.assert_allclose(adjusted_risk_aversion(m).tilde_gamma, [0.6])
    np.testing.assert_allclose(optimal_strategies(m)[0], [1.0])


def test_heterogeneous_agents():
    m = market([0.5, 1.0], [(1, 0), (0, 0)], (0, 1))
    adj = adjusted_risk_aversion(m)
    assert adj.gamma_market == pytest.approx(1 / 3)
    np.testing.assert_allclose(adj.tilde_gamma, [1 / 3, 1 / 3])
    th1, th2 = optimal_strategies(m)
    np.testing.assert_allclose(th1, [-1 / 3, 2 / 3])
    np.testing.assert_allclose(th1 + th2, [0, 1], atol=1e-15)


def test_pricing_weight_examples():
    assert pricing_weight([0.6], [0.0]) == 1.0
    assert pricing_weight([0.6], [1.0]) == pytest.approx(0.548812, abs=1e-6)
    assert pricing_weight([0.2, 0.2], [1.0, 0.5]) == pytest.approx(0.740818, abs=1e-6)


def test_pricing_weight_overflow():
    with pytest.raises(ExponentOverflow):
        pricing_weight([1.0], [-800.0])


def test_strikes_must_increase():
    with pytest.raises(ValueError):
        MarketSpec.from_adjusted([0.1, 0.1, 0.1], (Linear(), Call(1.1), Call(1.0)), 1.0)


def test_config_roundtrip(tmp_path):
    d = {"agents": [{"risk_aversion": 0.4}, {"risk_aversion": 0.4}], "net_supply": [1, 0],
         "payoffs": [{"type": "linear"}, {"type": "call", "strike": 1.0}], "horizon": 0.5}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(d))
    m = load_market(path)
    np.testing.assert_allclose(adjusted_risk_aversion(m).tilde_gamma, [0.2, 0.0])
    assert market_from_dict({"gamma_tilde": [0.2], "payoffs": [{"type": "linear"}], "horizon": 1}).net_supply == (0.2,)


@pytest.mark.parametrize("bad", [
    {"gamma_tilde": [0.2], "payoffs": [{"type": "linear"}], "horizon": 1, "extra": 1},
    {"gamma_tilde": [0.2], "payoffs": [{"type": "put", "strike": 1}], "horizon": 1},
    {"payoffs": [{"type": "linear"}], "horizon": 1},
])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        market_from_dict(bad)


agents_st = st.integers(1, 6).flatmap(lambda a: st.integers(1, 5).flatmap(lambda k: st.tuples(
    st.lists(st.floats(1e-3, 50.0), min_size=a, max_size=a),
    st.lists(st.lists(st.floats(-10, 10), min_size=k, max_size=k), min_size=a, max_size=a),
    st.lists(st.floats(-10, 10), min_size=k, max_size=k))))


@settings(max_examples=1000)
@given(agents_st)
def test_market_clears(data):
    gammas, etas, n = data
    m = market(gammas, [tuple(e) for e in etas], tuple(n))
    total = np.sum(optimal_strategies(m), axis=0)
    scale = max(1.0, np.max(np.abs(n)), np.max(np.abs(etas)))
    np.testing.assert_allclose(total, n, rtol=0, atol=64 * np.finfo(float).eps * scale * len(gammas))


@given(agents_st, st.floats(0.01, 100.0))
def test_strategies_scale_invariant(data, c):
    gammas, etas, n = data
    a = optimal_strategies(market(gammas, [tuple(e) for e in etas], tuple(n)))
    b = optimal_strategies(market([c * g for g in gammas], [tuple(e) for e in etas], tuple(n)))
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@given(agents_st)
def test_market_gamma_is_harmonic(data):
    gammas, etas, n = data
    m = market(gammas, [tuple(e) for e in etas], tuple(n))
    assert 1 / market_risk_aversion(m) == pytest.approx(sum(1 / g for g in gammas), rel=1e-13)
    adj = adjusted_risk_aversion(m)
    np.testing.assert_allclose(adj.tilde_gamma, adj.gamma_market * (np.sum(etas, axis=0) + n), rtol=1e-12, atol=1e-12)


@given(st.floats(0.01, 2.0), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_zero_supply_irrelevance(g, x, y1, y2):
    # second security: endowment +1 held by the agent, net supply -1, so adjusted supply vanishes
    m = MarketSpec((AgentSpec(g, 0.0, (0.0, 1.0)),), (1.0, -1.0), (Linear(), Linear()), 1.0)
    assert adjusted_risk_aversion(m).tilde_gamma[1] == 0
    assert pricing_weight(m, [x, y1]) == pricing_weight(m, [x, y2])
