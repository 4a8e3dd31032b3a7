import numpy as np
import pytest

from uwbloc.simulate import load_default_pulse_set


@pytest.fixture(scope="session")
def default_pulses():
    return load_default_pulse_set()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
