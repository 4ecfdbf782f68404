import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ncsimo.constellations import make_16qam, make_bpsk, make_qpsk

settings.register_profile(
    "ncsimo", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("ncsimo")


@pytest.fixture
def bpsk():
    return make_bpsk()


@pytest.fixture
def qpsk():
    return make_qpsk()


@pytest.fixture
def qam16():
    return make_16qam()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

