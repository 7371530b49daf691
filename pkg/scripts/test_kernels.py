"""Tests for kernels.py: sine integral, pseudoinverse, spectral mask, quadrature."""

import numpy as np
import pytest

from errors import NumericalError
from kernels import (SI_TABLE, DenseMatrix, grid_norm, pinv_truncated, quad_adaptive, si,
                     si_integral, si_oracle, spectral_mask)


# =============================================================================
# SINE INTEGRAL
# =============================================================================

def test_si_basic_values():
    assert si(0.0) == 0.0
    assert isinstance(si(1.0), float)
    assert si(1e6) == pytest.approx(np.pi / 2, abs=1e-5)


def test_si_is_odd():
    xs = np.array([0.1, 2.5, 4.0, 17.3, 250.0])
    np.testing.assert_allclose(si(-xs), -si(xs), rtol=0, atol=1e-15)


@pytest.mark.parametrize('x', [0.3, 3.9, 4.0, 4.1, 12.7, -7.3, 60.0])
def test_si_matches_quadrature(x):
    assert si(x) == pytest.approx(si_oracle(x), abs=1e-12)


def test_si_table_contract():
    assert SI_TABLE.passes([0.5, 3.99, 4.01, 30.0])
    # points beyond the checked range are ignored
    assert SI_TABLE.max_error([5e3]) == 0.0


def test_si_integral_derivative_is_si():
    h = 1e-5
    for x in (-6.0, -0.4, 0.7, 3.3, 25.0):
        slope = (si_integral(x + h) - si_integral(x - h)) / (2 * h)
        assert slope == pytest.approx(si(x), abs=1e-7)


def test_si_integral_at_zero():
    assert si_integral(0.0) == pytest.approx(1.0)


# =============================================================================
# PSEUDOINVERSE
# =============================================================================

def test_pinv_penrose_identities(rng):
    a = rng.normal(size=(6, 4))
    ap = pinv_truncated(a).to_array()
    np.testing.assert_allclose(a @ ap @ a, a, atol=1e-10)
    np.testing.assert_allclose(ap @ a @ ap, ap, atol=1e-10)
    np.testing.assert_allclose((a @ ap).T, a @ ap, atol=1e-10)
    np.testing.assert_allclose((ap @ a).T, ap @ a, atol=1e-10)


def test_pinv_full_rank_matches_inverse(rng):
    a = rng.normal(size=(5, 5)) + 5 * np.eye(5)
    result = pinv_truncated(a)
    np.testing.assert_allclose(result.to_array(), np.linalg.inv(a), atol=1e-10)
    assert result.rank == 5
    assert result.shape == (5, 5)
    assert result.condition_number == pytest.approx(np.linalg.cond(a), rel=1e-8)


def test_pinv_rank_deficient():
    v = np.array([1.0, 2.0, 3.0])
    result = pinv_truncated(np.outer(v, v))
    assert result.rank == 1
    assert result.condition_number == pytest.approx(1.0)


def test_pinv_condition_counts_retained_values_only():
    a = np.diag([1.0, 1e-3, 1e-12])
    result = pinv_truncated(a, rel_cutoff=1e-8)
    assert result.rank == 2
    assert result.condition_number == pytest.approx(1e3)
    assert pinv_truncated(a, rel_cutoff=1e-13).condition_number == pytest.approx(1e12)


def test_pinv_zero_matrix():
    result = pinv_truncated(np.zeros((3, 2)))
    assert result.rank == 0
    assert result.condition_number == float('inf')
    assert result.shape == (2, 3)
    assert not np.any(result.to_array())


@pytest.mark.parametrize('cutoff', [0.0, 1.0, -1e-3])
def test_pinv_rejects_bad_cutoff(cutoff):
    with pytest.raises(ValueError):
        pinv_truncated(np.eye(2), cutoff)


def test_dense_matrix_checks_entry_count():
    with pytest.raises(ValueError):
        DenseMatrix(rows=2, cols=3, entries=np.zeros(5))
    m = DenseMatrix.from_array(np.arange(6.0).reshape(2, 3))
    assert m.shape == (2, 3)
    assert m.to_array()[1, 2] == 5.0


# =============================================================================
# SPECTRAL MASK AND NORMS
# =============================================================================

def test_spectral_mask_keeps_inband_and_drops_outband():
    dt, n = 0.01, 1000
    t = dt * np.arange(n)
    slow = np.cos(np.pi * t)          # pi rad/s, exactly periodic on the grid
    fast = np.sin(20 * np.pi * t)     # 20 pi rad/s
    masked = spectral_mask(slow + fast, dt, omega=2 * np.pi)
    np.testing.assert_allclose(masked, slow, atol=1e-10)


def test_spectral_mask_is_idempotent(rng):
    values = rng.normal(size=513)
    once = spectral_mask(values, 0.02, 10.0)
    np.testing.assert_allclose(spectral_mask(once, 0.02, 10.0), once, atol=1e-12)
    assert grid_norm(once, 0.02) <= grid_norm(values, 0.02)


def test_spectral_mask_rejects_short_input():
    with pytest.raises(ValueError):
        spectral_mask([1.0], 0.1, 1.0)


def test_grid_norm():
    assert grid_norm(np.ones(400), 0.25) == pytest.approx(10.0)


# =============================================================================
# QUADRATURE ORACLE
# =============================================================================

def test_quad_adaptive_polynomial():
    assert quad_adaptive(lambda x: x ** 2, 0.0, 1.0) == pytest.approx(1 / 3, abs=1e-12)


def test_quad_adaptive_reports_failure():
    with pytest.raises(NumericalError) as excinfo:
        quad_adaptive(lambda x: np.sin(50 * x), 0.0, 20.0, tol=1e-12, limit=1)
    assert excinfo.value.estimate is not None


def test_quad_adaptive_rejects_bad_tol():
    with pytest.raises(ValueError):
        quad_adaptive(np.cos, 0.0, 1.0, tol=0.0)
