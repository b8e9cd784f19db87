import numpy as np
import pytest
from hypothesis import given, strategies as st

from eqpricing import heston, oujump
from eqpricing.affine_core import (DomainQuery, FunctionalCharacteristics, domain_contains, expm1_ratio,
                                   riccati_explosion_time, riccati_integrate)
from eqpricing.errors import BoundaryCase, InvalidTolerance, PoleEncountered

from conftest import FIG1, FIG3

HP = heston.HestonParams(**FIG1)
OP = oujump.OUJumpParams(**FIG3)


def test_initial_condition_is_exact():
    res = riccati_integrate(heston.characteristics(HP), 0.0, [0.0, -0.2])
    assert res.phi == 0
    np.testing.assert_array_equal(res.psi, [0.0, -0.2])


def test_ou_psi_matches_decay():
    res = riccati_integrate(oujump.characteristics(OP), 0.1, [-0.2])
    assert res.psi[0].real == pytest.approx(-0.2 * np.exp(-0.2), abs=1e-12)
    assert res.psi[0].real == pytest.approx(-0.163746, abs=1e-6)


def test_heston_numeric_matches_closed_form():
    num = riccati_integrate(heston.characteristics(HP), 0.5, [0.0, -0.2])
    cf = heston.phi_psi(HP, 0.5, -0.2)
    assert abs(num.phi - cf.phi) < 1e-7
    np.testing.assert_allclose(num.psi, cf.psi, atol=1e-7)


def test_numeric_matches_independent_oracle(oracle):
    ref = oracle["heston_exponents_t0.5_u-0.2"]
    num = riccati_integrate(heston.characteristics(HP), 0.5, [0.0, -0.2])
    assert num.phi.real == pytest.approx(ref["phi"], abs=1e-10)
    assert num.psi[0].real == pytest.approx(ref["psi_v"], abs=1e-10)
    ref = oracle["ou_exponents_t0.1_u-0.2"]
    num = riccati_integrate(oujump.characteristics(OP), 0.1, [-0.2])
    assert num.phi.real == pytest.approx(ref["phi"], abs=1e-10)


def test_bad_tolerance():
    with pytest.raises(InvalidTolerance):
        riccati_integrate(heston.characteristics(HP), 0.5, [0.0, -0.2], step_control=(0.0, 1e-12))


def test_explosion_raises_pole():
    p = oujump.OUJumpParams(lam=2.0, mu=1.0, kappa=1.0, theta=1.0)
    with pytest.raises(PoleEncountered):
        riccati_integrate(oujump.characteristics(p), 1.0, [2.0])


def test_on_singularity_is_boundary_case():
    with pytest.raises(BoundaryCase):
        riccati_integrate(oujump.characteristics(OP), 0.1, [30.0])


def test_domain_examples():
    assert domain_contains("oujump", OP, DomainQuery(0.1, (-0.2,)))
    with pytest.raises(BoundaryCase):
        domain_contains("oujump", OP, DomainQuery(5.0, (-30.0,)))
    assert domain_contains("heston", HP, DomainQuery(0.5, (0.0, -0.2)))
    with pytest.raises(BoundaryCase):
        domain_contains("heston", HP, DomainQuery(0.5, (0.0, HP.lam / HP.sigma)))


def test_domain_generic_agrees_with_closed_form():
    chars = heston.characteristics(HP)
    t_plus = heston.explosion_time(HP, -1.0)
    assert domain_contains("generic", chars, DomainQuery(0.9 * t_plus, (0.0, -1.0)))
    assert not domain_contains("generic", chars, DomainQuery(1.1 * t_plus, (0.0, -1.0)))


def test_explosion_time_unbounded_inside():
    assert riccati_explosion_time(oujump.characteristics(OP), [-0.2], 5.0) == float("inf")


def test_user_supplied_characteristics():
    # Brownian motion with drift: phi = (m u + u^2/2) t, psi = u
    chars = FunctionalCharacteristics(F=lambda u: 0.3 * u[0] + 0.5 * u[0] ** 2, R=lambda u: np.zeros(1, complex), dim=1)
    res = riccati_integrate(chars, 2.0, [0.5 + 1j])
    u = 0.5 + 1j
    assert abs(res.phi - (0.3 * u + 0.5 * u * u) * 2.0) < 1e-10


def test_expm1_ratio_small_and_large():
    z = np.array([1e-12, 1e-3, 1.0, 30.0 + 2j])
    np.testing.assert_allclose(expm1_ratio(z), -np.expm1(-z) / z, rtol=1e-12)


@given(t=st.floats(0.0, 3.0), s=st.floats(0.0, 3.0), ur=st.floats(-1.0, 0.6), ui=st.floats(-20, 20))
def test_flow_property_heston(t, s, ur, ui):
    p = heston.HestonParams(**FIG1)
    u = complex(ur, ui)
    a = heston.phi_psi(p, t, u)
    # the second leg starts from the state psi(t, u), which has a V-component: use the numeric system
    chars = heston.characteristics(p)
    b = riccati_integrate(chars, s, a.psi, step_control=(1e-12, 1e-14))
    full = heston.phi_psi(p, t + s, u)
    scale = max(1.0, abs(full.phi))
    assert abs(full.phi - (a.phi + b.phi)) < 1e-9 * scale
    np.testing.assert_allclose(full.psi, b.psi, rtol=1e-9, atol=1e-12)


@given(t=st.floats(0.0, 2.0), s=st.floats(0.0, 2.0), ur=st.floats(-25.0, 25.0), ui=st.floats(-50, 50))
def test_flow_property_ou(t, s, ur, ui):
    p = oujump.OUJumpParams(**FIG3)
    u = complex(ur, ui)
    a = oujump.phi_psi(p, t, u)
    b = oujump.phi_psi(p, s, a.psi[..., 0])
    full = oujump.phi_psi(p, t + s, u)
    assert abs(full.phi - (a.phi + b.phi)) < 1e-9 * max(1.0, abs(full.phi))
    assert abs(full.psi[..., 0] - b.psi[..., 0]) < 1e-9 * max(1.0, abs(full.psi[..., 0]))


@given(t=st.floats(0.01, 2.0), ur=st.floats(-1.0, 0.6), ui=st.floats(-30, 30))
def test_conjugate_symmetry(t, ur, ui):
    u = complex(ur, ui)
    a, b = heston.phi_psi(HP, t, u), heston.phi_psi(HP, t, np.conj(u))
    assert abs(a.phi - np.conj(b.phi)) < 1e-12 * max(1, abs(a.phi))
    np.testing.assert_allclose(a.psi, np.conj(b.psi), rtol=1e-12, atol=1e-15)
    a, b = oujump.phi_psi(OP, t, u), oujump.phi_psi(OP, t, np.conj(u))
    assert abs(a.phi - np.conj(b.phi)) < 1e-12 * max(1, abs(a.phi))


@given(t=st.floats(0.0, 5.0), s=st.floats(-40, 40), v=st.floats(0, 1), x=st.floats(-5, 5))
def test_characteristic_function_bounded(t, s, v, x):
    assert heston.phi_psi(HP, t, 1j * s).exponent([v, x]).real <= 1e-12
    assert oujump.phi_psi(OP, t, 1j * s).exponent([x]).real <= 1e-12


@given(T=st.floats(0.0, 30.0), shrink=st.floats(0.0, 1.0), u=st.floats(-3.0, 3.0))
def test_domain_monotone(T, shrink, u):
    if abs(abs(u) * HP.sigma - HP.lam) < 1e-6:
        return
    if domain_contains("heston", HP, DomainQuery(T, (0.0, u))):
        assert domain_contains("heston", HP, DomainQuery(T * shrink, (0.0, u)))


def test_conservative_characteristics():
    for chars, d in ((heston.characteristics(HP), 2), (oujump.characteristics(OP), 1)):
        assert chars.F(np.zeros(d, complex)) == 0
        np.testing.assert_array_equal(chars.R(np.zeros(d, complex)), 0)
