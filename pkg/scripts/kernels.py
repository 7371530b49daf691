"""
TEM Codec - Numerical Kernels
=============================
Numerical building blocks shared by the encoder and the decoders.

Contents:
- Sine integral Si(x) and its antiderivative x*Si(x) + cos(x)
- Truncated-SVD Moore-Penrose pseudoinverse on a small dense matrix type
- Spectral low-pass mask (grid realization of the bandlimiting projection)
- Adaptive quadrature oracle used to validate every analytic formula
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate, special

from errors import NumericalError


# =============================================================================
# CONFIGURATION
# =============================================================================

# Singular values below DEFAULT_REL_CUTOFF * sigma_max are discarded
DEFAULT_REL_CUTOFF = 1e-8

# Subinterval budget for the adaptive quadrature oracle
QUAD_LIMIT = 200

ArrayLike = Union[float, Sequence[float], np.ndarray]


# =============================================================================
# SINE INTEGRAL
# =============================================================================

@dataclass(frozen=True)
class SiTable:
    """
    Evaluation scheme of the sine integral.

    Si is evaluated by Cephes (scipy.special.sici): a power series for
    |x| <= switch_point and the auxiliary f/g functions beyond it.
    The table records that scheme and the accuracy contract it is held to.
    """

    switch_point: float = 4.0
    check_range: float = 1e3
    tolerance: float = 1e-12

    def max_error(self, xs: ArrayLike) -> float:
        """Largest |si(x) - si_oracle(x)| over the given points inside check_range."""
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        xs = xs[np.abs(xs) <= self.check_range]
        if xs.size == 0:
            return 0.0
        return float(max(abs(si(x) - si_oracle(x)) for x in xs))

    def passes(self, xs: ArrayLike) -> bool:
        return self.max_error(xs) <= self.tolerance


SI_TABLE = SiTable()


def si(x: ArrayLike) -> Union[float, np.ndarray]:
    """
    Sine integral Si(x) = integral from 0 to x of sin(u)/u du.

    Odd in x, Si(0) = 0, Si(+inf) = pi/2.
    """
    values = special.sici(np.asarray(x, dtype=float))[0]
    if np.ndim(values) == 0:
        return float(values)
    return values


def si_integral(x: ArrayLike) -> Union[float, np.ndarray]:
    """
    Antiderivative of Si.

    Formula: F(x) = x * Si(x) + cos(x)
    """
    x = np.asarray(x, dtype=float)
    values = x * special.sici(x)[0] + np.cos(x)
    if np.ndim(values) == 0:
        return float(values)
    return values


def si_oracle(x: float, tol: float = 1e-13) -> float:
    """
    Si(x) by adaptive quadrature of sin(u)/u, one half-period at a time.

    Slow; only used to validate si().
    """
    x = float(x)
    if x == 0.0:
        return 0.0
    sign = 1.0 if x > 0 else -1.0
    edges = np.arange(0.0, abs(x), np.pi)
    edges = np.append(edges, abs(x))
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += quad_adaptive(lambda u: np.sinc(u / np.pi), a, b, tol)
    return sign * total


# =============================================================================
# DENSE MATRICES AND PSEUDOINVERSE
# =============================================================================

@dataclass(frozen=True)
class DenseMatrix:
    """
    Row-major dense matrix.

    rank and condition_number are filled in when the matrix is produced by
    pinv_truncated(): rank is the number of retained singular values and
    condition_number is sigma_max over the smallest retained singular value,
    at most 1 / rel_cutoff.
    """

    rows: int
    cols: int
    entries: np.ndarray
    rank: Optional[int] = None
    condition_number: Optional[float] = None

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float).ravel()
        object.__setattr__(self, 'entries', entries)
        if self.rows * self.cols != entries.size:
            raise ValueError(
                f"{self.rows}x{self.cols} matrix needs {self.rows * self.cols} "
                f"entries, got {entries.size}"
            )
        if not np.all(np.isfinite(entries)):
            raise ValueError("matrix entries must be finite")

    @classmethod
    def from_array(cls, array: np.ndarray) -> 'DenseMatrix':
        array = np.atleast_2d(np.asarray(array, dtype=float))
        return cls(rows=array.shape[0], cols=array.shape[1], entries=array.ravel())

    def to_array(self) -> np.ndarray:
        return self.entries.reshape(self.rows, self.cols)

    @property
    def shape(self):
        return (self.rows, self.cols)


def pinv_truncated(a: Union[DenseMatrix, np.ndarray],
                   rel_cutoff: float = DEFAULT_REL_CUTOFF) -> DenseMatrix:
    """
    Moore-Penrose pseudoinverse by truncated SVD.

    Singular values below rel_cutoff * sigma_max are treated as zero.

    Args:
        a: Matrix to invert
        rel_cutoff: Relative singular-value cutoff in (0, 1)

    Returns:
        DenseMatrix of shape (cols, rows) with rank and condition_number set
    """
    if not 0.0 < rel_cutoff < 1.0:
        raise ValueError(f"rel_cutoff must lie in (0, 1), got {rel_cutoff}")

    array = a.to_array() if isinstance(a, DenseMatrix) else np.atleast_2d(np.asarray(a, dtype=float))
    if array.size == 0:
        raise ValueError("cannot invert an empty matrix")

    u, s, vt = np.linalg.svd(array, full_matrices=False)
    sigma_max = s[0] if s.size else 0.0
    if sigma_max == 0.0:
        inverse = np.zeros((array.shape[1], array.shape[0]))
        return DenseMatrix(rows=inverse.shape[0], cols=inverse.shape[1],
                           entries=inverse.ravel(), rank=0,
                           condition_number=float('inf'))

    keep = s >= rel_cutoff * sigma_max
    inverse = (vt[keep].T / s[keep]) @ u[:, keep].T

    # Condition of the system actually inverted: truncated directions do not count
    condition = float(sigma_max / s[keep][-1])

    return DenseMatrix(
        rows=inverse.shape[0],
        cols=inverse.shape[1],
        entries=inverse.ravel(),
        rank=int(keep.sum()),
        condition_number=condition,
    )


# =============================================================================
# SPECTRAL MASK AND NORMS
# =============================================================================

def spectral_mask(values: ArrayLike, dt: float, omega: float) -> np.ndarray:
    """
    Ideal low-pass on a uniform grid.

    Zeroes every discrete frequency bin with |angular frequency| > omega.
    This is an orthogonal projection for the grid inner product, so it is
    idempotent and never increases the norm.

    Args:
        values: Real samples (length >= 2)
        dt: Grid step
        omega: Cutoff in rad/s
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise ValueError("spectral_mask needs a 1-D array with at least 2 samples")

    spectrum = np.fft.rfft(values)
    freqs = 2 * np.pi * np.fft.rfftfreq(values.size, d=dt)
    spectrum[freqs > omega] = 0.0
    return np.fft.irfft(spectrum, n=values.size)


def grid_norm(values: ArrayLike, dt: float) -> float:
    """
    L2 norm of grid samples.

    Formula: ||v|| = sqrt(dt * sum(v^2))
    """
    values = np.asarray(values, dtype=float)
    return float(np.sqrt(dt * np.dot(values, values)))


# =============================================================================
# QUADRATURE ORACLE
# =============================================================================

def quad_adaptive(f: Callable[[float], float], a: float, b: float,
                  tol: float = 1e-10, limit: int = QUAD_LIMIT) -> float:
    """
    Adaptive Gauss-Kronrod quadrature of f over [a, b].

    Raises:
        NumericalError: when QUADPACK reports a problem or the error
            estimate exceeds tol; the achieved value is attached.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")

    result = integrate.quad(f, a, b, epsabs=tol, epsrel=0.0, limit=limit, full_output=1)
    value, abserr = result[0], result[1]
    if len(result) > 3 or abserr > tol:
        message = result[3] if len(result) > 3 else f"error estimate {abserr:.3g} above tol"
        raise NumericalError(
            f"quadrature over [{a}, {b}] did not converge: {message}",
            estimate=value,
        )
    return float(value)
