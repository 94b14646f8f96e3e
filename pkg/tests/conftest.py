import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pqglab import background as bgm
from pqglab.grid import Grid
from pqglab.thermo import ThermoParams

settings.register_profile("pqglab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pqglab")


@pytest.fixture(scope="session")
def tp():
    return ThermoParams()


@pytest.fixture(scope="session")
def grid16():
    return Grid(16, 16, 8, 4.0e6, 4.0e6, 1.0e4)


@pytest.fixture(scope="session")
def moist_bg(tp, grid16):
    return bgm.build_background({}, grid16.z, tp)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(1234))
