"""Shared fixtures for the codec tests."""

import warnings

import numpy as np
import pytest

from encoder import TemParams
from signals import estimate_bound, generate_random_signal, make_grid

WINDOW = (0.0, 10.0)
ENCODE_WINDOW = (-2.0, 12.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_params():
    """kappa = delta = 1, b = 2."""
    return TemParams(kappa=1.0, delta=1.0, bias=2.0)


@pytest.fixture
def slow_signal():
    """Random unit-norm signal at a quarter of pi rad/s."""
    return generate_random_signal(np.pi / 4, WINDOW, seed=3)


@pytest.fixture
def medium_signal():
    return generate_random_signal(np.pi / 2, WINDOW, seed=11)


@pytest.fixture
def margin_params():
    """Builds params with b = c + 1, c measured over the widened encoding window."""
    def build(signal):
        c = estimate_bound(signal, window=ENCODE_WINDOW)
        return TemParams(kappa=1.0, delta=1.0, bias=c + 1.0), c
    return build


@pytest.fixture
def output_grid():
    return make_grid(WINDOW, 1000)


@pytest.fixture
def quiet():
    """Silence RuntimeWarnings inside a test body."""
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', RuntimeWarning)
        yield
