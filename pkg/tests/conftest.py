import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from proxbridge import oracle, simulation

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def preset_joint():
    return oracle.nonunique_preset()


@pytest.fixture(scope="session")
def preset_sample():
    return simulation.sample_discrete(oracle.nonunique_preset(), 4000, 20240601)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
