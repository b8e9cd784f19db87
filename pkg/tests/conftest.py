import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from eqpricing import heston, oujump

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ORACLE = json.loads((Path(__file__).parent / "oracles" / "values.json").read_text())

FIG1 = dict(mu=0.1, kappa=0.006, lam=0.2, sigma=0.3, v0=0.03, x0=1.0)
FIG3 = dict(lam=2.0, mu=1.0, kappa=30.0, theta=30.0, x0=1.0)


@pytest.fixture(scope="session")
def oracle():
    return ORACLE


@pytest.fixture
def hp():
    return heston.HestonParams(**FIG1)


@pytest.fixture
def op():
    return oujump.OUJumpParams(**FIG3)


@pytest.fixture
def heston_model(hp):
    return heston.HestonModel(hp)


@pytest.fixture
def ou_model(op):
    return oujump.OUJumpModel(op)
