import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from greenldp import nearest_neighbor

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def walk1d():
    return nearest_neighbor([0.7, 0.3])


@pytest.fixture(scope="session")
def walk2d():
    return nearest_neighbor([0.4, 0.3, 0.2, 0.1])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
