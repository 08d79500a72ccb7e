import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from esncast.persistence import cached_calibration
from esncast.systems import DOUBLE_SCROLL, LORENZ, ROSSLER

settings.register_profile(
    "ci", derandomize=True, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")

CACHE_DIR = "tests/_cache"
CALIBRATION_SEED = 0
CALIBRATION_HORIZON = 20000.0


def calibrated(name):
    """Session-cached calibration shared by tests and the acceptance driver."""
    return cached_calibration(name, CALIBRATION_SEED, CALIBRATION_HORIZON, CACHE_DIR)


@pytest.fixture(scope="session")
def lorenz_sys():
    return calibrated(LORENZ)


@pytest.fixture(scope="session")
def rossler_sys():
    return calibrated(ROSSLER)


@pytest.fixture(scope="session")
def dscroll_sys():
    return calibrated(DOUBLE_SCROLL)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
