"""
TEM Codec - Reconstruction Metrics
==================================
Error measures between a reconstruction and the true signal on a shared grid.

Window edges are excluded: spikes only constrain the signal between the
first and last spike, so errors are measured over the middle 90% of the
grid indices.
"""

import math
from typing import Dict, Optional

import numpy as np

from errors import DataError
from kernels import grid_norm
from signals import GridSignal


# =============================================================================
# CONFIGURATION
# =============================================================================

# Fraction of grid indices kept by the mid-window metrics
MID_FRACTION = 0.9


# =============================================================================
# WINDOWING
# =============================================================================

def mid_slice(n_points: int, fraction: float = MID_FRACTION) -> slice:
    """
    Central index range keeping `fraction` of n_points.

    Drops floor(n * (1 - fraction) / 2) indices at each end.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    drop = int(math.floor(n_points * (1.0 - fraction) / 2 + 1e-9))
    return slice(drop, n_points - drop)


def _check_same_grid(estimate: GridSignal, truth: GridSignal) -> None:
    if not estimate.same_grid(truth):
        raise DataError(
            f"grid mismatch: estimate ({estimate.n} pts, t0={estimate.t0}, dt={estimate.dt}) "
            f"vs truth ({truth.n} pts, t0={truth.t0}, dt={truth.dt})"
        )


# =============================================================================
# ERROR METRICS
# =============================================================================

def mse_mid90(estimate: GridSignal, truth: GridSignal) -> float:
    """
    Mean squared error over the middle 90% of grid indices.

    Formula: MSE = mean((estimate - truth)^2) over indices [floor(5% n), n - floor(5% n))

    Raises:
        DataError: "grid mismatch" when the two signals are not on the same grid
    """
    _check_same_grid(estimate, truth)
    keep = mid_slice(truth.n)
    diff = estimate.values[keep] - truth.values[keep]
    return float(np.mean(diff ** 2))


def grid_l2_distance(a: GridSignal, b: GridSignal, fraction: float = MID_FRACTION) -> float:
    """
    L2 distance over the middle of the window.

    Formula: ||a - b|| = sqrt(dt * sum((a - b)^2)) over the mid slice
    """
    _check_same_grid(a, b)
    keep = mid_slice(a.n, fraction)
    return grid_norm(a.values[keep] - b.values[keep], a.dt)


def reconstruction_snr_db(estimate: GridSignal, truth: GridSignal) -> float:
    """
    Signal-to-error ratio over the middle 90%, in dB.

    Formula: SNR = 10 * log10( mean(truth^2) / MSE )
    """
    mse = mse_mid90(estimate, truth)
    power = float(np.mean(truth.values[mid_slice(truth.n)] ** 2))
    if mse == 0:
        return float('inf')
    if power == 0:
        return float('-inf')
    return 10.0 * math.log10(power / mse)


def error_summary(estimate: GridSignal, truth: Optional[GridSignal]) -> Dict[str, Optional[float]]:
    """Metrics block written next to a reconstruction (empty when truth is unknown)."""
    if truth is None:
        return {'mse_mid90': None, 'l2_mid90': None, 'snr_db': None}
    return {
        'mse_mid90': mse_mid90(estimate, truth),
        'l2_mid90': grid_l2_distance(estimate, truth),
        'snr_db': reconstruction_snr_db(estimate, truth),
    }
