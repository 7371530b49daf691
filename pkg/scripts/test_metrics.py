"""Tests for metrics.py."""

import numpy as np
import pytest

from errors import DataError
from metrics import (error_summary, grid_l2_distance, mid_slice, mse_mid90,
                     reconstruction_snr_db)
from signals import make_grid


@pytest.mark.parametrize('n, expected', [
    (2000, (100, 1900)),
    (1000, (50, 950)),
    (1001, (50, 951)),
    (10, (0, 10)),
])
def test_mid_slice(n, expected):
    s = mid_slice(n)
    assert (s.start, s.stop) == expected


def test_mid_slice_rejects_bad_fraction():
    with pytest.raises(ValueError):
        mid_slice(100, 0.0)


def test_mse_ignores_edges():
    grid = make_grid((0.0, 10.0), 2000)
    truth = grid.with_values(np.zeros(2000))
    values = np.zeros(2000)
    values[:100] = 100.0
    values[1900:] = -100.0
    values[100:1900] = 0.1
    assert mse_mid90(grid.with_values(values), truth) == pytest.approx(0.01)


def test_grid_mismatch():
    a = make_grid((0.0, 10.0), 100)
    b = make_grid((0.0, 10.0), 101)
    with pytest.raises(DataError, match="grid mismatch"):
        mse_mid90(a, b)


def test_l2_distance_of_constant_offset():
    grid = make_grid((0.0, 10.0), 1001)
    a = grid.with_values(np.ones(1001))
    n_mid = 1001 - 2 * 50
    assert grid_l2_distance(a, grid) == pytest.approx(np.sqrt(grid.dt * n_mid))


def test_snr():
    grid = make_grid((0.0, 10.0), 200)
    truth = grid.with_values(np.ones(200))
    assert reconstruction_snr_db(truth, truth) == float('inf')
    estimate = grid.with_values(np.full(200, 1.1))
    assert reconstruction_snr_db(estimate, truth) == pytest.approx(20.0)


def test_error_summary():
    grid = make_grid((0.0, 10.0), 200)
    assert error_summary(grid, None) == {'mse_mid90': None, 'l2_mid90': None, 'snr_db': None}
    summary = error_summary(grid.with_values(np.full(200, 1.1)), grid.with_values(np.ones(200)))
    assert summary['mse_mid90'] == pytest.approx(0.01)
    assert summary['snr_db'] == pytest.approx(20.0)
