"""Tests for signals.py."""

import numpy as np
import pytest

from kernels import quad_adaptive
from signals import (BandlimitedSignal, ConstantSignal, GridSignal, estimate_bound,
                     generate_random_signal, make_grid)

WINDOW = (0.0, 10.0)


def test_make_grid_spans_window():
    grid = make_grid(WINDOW, 2000)
    assert grid.n == 2000
    assert grid.t0 == 0.0
    assert grid.t_end == pytest.approx(10.0)
    assert grid.dt == pytest.approx(10.0 / 1999)
    assert not np.any(grid.values)


@pytest.mark.parametrize('window', [(1.0, 1.0), (2.0, 1.0), (0.0, np.inf)])
def test_make_grid_rejects_bad_window(window):
    with pytest.raises(ValueError):
        make_grid(window, 10)


def test_grid_signal_validation():
    with pytest.raises(ValueError):
        GridSignal(t0=0.0, dt=0.1, values=[1.0, np.nan])
    with pytest.raises(ValueError):
        GridSignal(t0=0.0, dt=0.0, values=[1.0, 2.0])
    with pytest.raises(ValueError):
        GridSignal(t0=0.0, dt=0.1, values=[1.0])


def test_same_grid():
    a = make_grid(WINDOW, 100)
    assert a.same_grid(a.with_values(np.ones(100)))
    assert not a.same_grid(make_grid(WINDOW, 101))
    assert not a.same_grid(make_grid((0.5, 10.5), 100))


def test_random_signal_has_unit_norm():
    signal = generate_random_signal(np.pi / 2, WINDOW, seed=7)
    assert signal.to_grid(2000).norm() == pytest.approx(1.0, abs=1e-12)


def test_random_signal_centers():
    signal = generate_random_signal(np.pi / 2, WINDOW, seed=7)
    # spacing pi / omega = 2 s over a 10 s window
    np.testing.assert_allclose(signal.centers, [0.0, 2.0, 4.0, 6.0, 8.0, 10.0])
    assert np.all(signal.coeffs > 0)


def test_random_signal_is_reproducible():
    a = generate_random_signal(np.pi, WINDOW, seed=42)
    b = generate_random_signal(np.pi, WINDOW, seed=42)
    c = generate_random_signal(np.pi, WINDOW, seed=43)
    np.testing.assert_array_equal(a.coeffs, b.coeffs)
    assert not np.array_equal(a.coeffs, c.coeffs)


def test_window_too_short():
    with pytest.raises(ValueError, match="window too short for one sinc center"):
        generate_random_signal(np.pi / 2, (0.0, 1.0), seed=1)


def test_bandlimited_validation():
    with pytest.raises(ValueError):
        BandlimitedSignal(1.0, [2.0, 1.0], [1.0, 1.0], WINDOW)
    with pytest.raises(ValueError):
        BandlimitedSignal(1.0, [1.0], [1.0, 2.0], WINDOW)
    with pytest.raises(ValueError):
        BandlimitedSignal(-1.0, [1.0], [1.0], WINDOW)


def test_kernel_peak():
    signal = BandlimitedSignal(np.pi, [5.0], [1.0], WINDOW)
    assert signal.eval(5.0) == pytest.approx(1.0)
    assert signal.eval(6.0) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize('t', [0.3, 2.5, 5.0, 7.77, 11.0])
def test_primitive_derivative_is_value(medium_signal, t):
    h = 1e-5
    slope = (medium_signal.primitive(t + h) - medium_signal.primitive(t - h)) / (2 * h)
    assert slope == pytest.approx(medium_signal.eval(t), abs=1e-6)


def test_primitive_matches_quadrature(medium_signal):
    exact = medium_signal.primitive(4.2) - medium_signal.primitive(1.1)
    assert exact == pytest.approx(quad_adaptive(medium_signal.eval, 1.1, 4.2, tol=1e-11), abs=1e-9)


def test_primitive_vanishes_far_left():
    signal = BandlimitedSignal(np.pi, [0.0], [1.0], WINDOW)
    assert signal.primitive(-1e7) == pytest.approx(0.0, abs=1e-6)
    assert signal.primitive(1e7) == pytest.approx(1.0, abs=1e-6)


def test_constant_signal():
    signal = ConstantSignal(0.5, (1.0, 3.0))
    assert signal.eval(2.0) == 0.5
    np.testing.assert_allclose(signal.eval(np.array([1.0, 2.0])), [0.5, 0.5])
    assert signal.primitive(3.0) == pytest.approx(1.0)
    assert signal.to_grid(5).values.tolist() == [0.5] * 5


def test_estimate_bound_covers_signal(medium_signal):
    c = estimate_bound(medium_signal)
    assert c >= np.max(np.abs(medium_signal.to_grid(5000).values))


def test_estimate_bound_over_wider_window(medium_signal):
    wide = (-2.0, 12.0)
    c = estimate_bound(medium_signal, window=wide)
    samples = medium_signal.eval(make_grid(wide, 7000).times)
    assert c >= np.max(np.abs(samples))


def test_scaled_and_envelope(medium_signal):
    doubled = medium_signal.scaled(2.0)
    assert doubled.eval(3.0) == pytest.approx(2 * medium_signal.eval(3.0))
    assert medium_signal.amplitude_envelope() >= estimate_bound(medium_signal) / 1.01
