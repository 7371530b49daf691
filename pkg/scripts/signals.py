"""
TEM Codec - Bandlimited Test Signals
====================================
Synthesis, exact evaluation and grid discretization of the signals fed to
the time encoding machines.

Signals are finite sinc expansions

    x(t) = sum_i coeff_i * g(t - center_i),   g(t) = sin(Omega t) / (pi t)

whose centers sit on a uniform grid of spacing pi/Omega over the window.
The running integral (primitive) is exact through the sine integral, which
is what lets the encoder place spike times without discretization bias.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from kernels import ArrayLike, grid_norm, si


# =============================================================================
# CONFIGURATION
# =============================================================================

# Default evaluation grid (points per window); also defines unit norm
DEFAULT_GRID_POINTS = 2000

# Signal bound c: max |x| on an oversampled grid, inflated by 1%
BOUND_OVERSAMPLE = 10
BOUND_INFLATION = 1.01

# Slack when counting centers that fit in the window
CENTER_COUNT_SLACK = 1e-9

Window = Tuple[float, float]


def check_window(window: Window) -> Window:
    t_start, t_end = float(window[0]), float(window[1])
    if not (np.isfinite(t_start) and np.isfinite(t_end)) or t_end <= t_start:
        raise ValueError(f"window must be a finite, nondegenerate interval, got {window}")
    return (t_start, t_end)


# =============================================================================
# GRID SIGNALS
# =============================================================================

@dataclass(frozen=True)
class GridSignal:
    """
    Uniformly sampled signal: values[j] is the value at t0 + j * dt.
    """

    t0: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, 'values', values)
        if self.dt <= 0:
            raise ValueError(f"grid step must be positive, got {self.dt}")
        if values.ndim != 1 or values.size < 2:
            raise ValueError("a grid signal needs at least 2 samples")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid signal values must be finite")

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (self.n - 1)

    def norm(self) -> float:
        return grid_norm(self.values, self.dt)

    def with_values(self, values: np.ndarray) -> 'GridSignal':
        return GridSignal(t0=self.t0, dt=self.dt, values=values)

    def same_grid(self, other: 'GridSignal', rtol: float = 1e-12) -> bool:
        return (
            self.n == other.n
            and math.isclose(self.t0, other.t0, rel_tol=rtol, abs_tol=rtol)
            and math.isclose(self.dt, other.dt, rel_tol=rtol)
        )


def make_grid(window: Window, n_points: int = DEFAULT_GRID_POINTS) -> GridSignal:
    """Zero-valued grid with n_points samples spanning the window (endpoints included)."""
    t_start, t_end = check_window(window)
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    dt = (t_end - t_start) / (n_points - 1)
    return GridSignal(t0=t_start, dt=dt, values=np.zeros(n_points))


# =============================================================================
# BANDLIMITED SIGNALS
# =============================================================================

@dataclass(frozen=True)
class BandlimitedSignal:
    """
    Finite sinc expansion with bandwidth omega over a window.

    Attributes:
        omega: Angular bandwidth in rad/s
        centers: Sinc center times, strictly increasing
        coeffs: One real amplitude per center
        window: (t_start, t_end) in seconds
    """

    omega: float
    centers: np.ndarray
    coeffs: np.ndarray
    window: Window

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float).ravel()
        coeffs = np.asarray(self.coeffs, dtype=float).ravel()
        object.__setattr__(self, 'centers', centers)
        object.__setattr__(self, 'coeffs', coeffs)
        object.__setattr__(self, 'window', check_window(self.window))

        if not (np.isfinite(self.omega) and self.omega > 0):
            raise ValueError(f"omega must be positive, got {self.omega}")
        if centers.size != coeffs.size or centers.size == 0:
            raise ValueError("centers and coeffs must be non-empty and of equal length")
        if not (np.all(np.isfinite(centers)) and np.all(np.isfinite(coeffs))):
            raise ValueError("centers and coeffs must be finite")
        if np.any(np.diff(centers) <= 0):
            raise ValueError("centers must be strictly increasing")

    def kernel(self, t: ArrayLike) -> np.ndarray:
        """g(t) = sin(Omega t)/(pi t), with g(0) = Omega/pi."""
        t = np.asarray(t, dtype=float)
        return (self.omega / np.pi) * np.sinc(self.omega * t / np.pi)

    def eval(self, t: ArrayLike) -> Union[float, np.ndarray]:
        """Signal value(s) at time(s) t."""
        t = np.asarray(t, dtype=float)
        values = self.kernel(t[..., None] - self.centers) @ self.coeffs
        return float(values) if values.ndim == 0 else values

    def primitive(self, t: ArrayLike) -> Union[float, np.ndarray]:
        """
        Running integral from -inf to t.

        Formula: X(t) = sum_i coeff_i * Si(Omega (t - center_i)) / pi + sum_i coeff_i / 2
        """
        t = np.asarray(t, dtype=float)
        running = si(self.omega * (t[..., None] - self.centers)) @ self.coeffs / np.pi
        values = running + 0.5 * self.coeffs.sum()
        return float(values) if np.ndim(values) == 0 else values

    def to_grid(self, n_points: int = DEFAULT_GRID_POINTS) -> GridSignal:
        grid = make_grid(self.window, n_points)
        return grid.with_values(self.eval(grid.times))

    def amplitude_envelope(self) -> float:
        """Upper bound on |x(t)|: sum |coeff_i| * Omega / pi."""
        return float(np.abs(self.coeffs).sum() * self.omega / np.pi)

    def scaled(self, factor: float) -> 'BandlimitedSignal':
        return BandlimitedSignal(self.omega, self.centers, self.coeffs * factor, self.window)


@dataclass(frozen=True)
class ConstantSignal:
    """
    DC input x(t) = value over a window.

    Used to calibrate encoders: with a constant input every spike interval
    has the closed form 2*kappa*delta / (b + value).
    """

    value: float
    window: Window

    def __post_init__(self):
        object.__setattr__(self, 'window', check_window(self.window))
        if not np.isfinite(self.value):
            raise ValueError("constant value must be finite")

    def eval(self, t: ArrayLike) -> Union[float, np.ndarray]:
        t = np.asarray(t, dtype=float)
        values = np.full(t.shape, float(self.value))
        return float(values) if values.ndim == 0 else values

    def primitive(self, t: ArrayLike) -> Union[float, np.ndarray]:
        """Integral from t_start to t."""
        t = np.asarray(t, dtype=float)
        values = self.value * (t - self.window[0])
        return float(values) if values.ndim == 0 else values

    def to_grid(self, n_points: int = DEFAULT_GRID_POINTS) -> GridSignal:
        grid = make_grid(self.window, n_points)
        return grid.with_values(self.eval(grid.times))


Signal = Union[BandlimitedSignal, ConstantSignal]


# =============================================================================
# GENERATION
# =============================================================================

def generate_random_signal(omega: float,
                           window: Window,
                           seed: Optional[int] = None,
                           n_points: int = DEFAULT_GRID_POINTS) -> BandlimitedSignal:
    """
    Random sinc expansion with unit norm on the default grid.

    Centers sit at t_start + k*pi/omega for k = 0..floor((t_end - t_start)*omega/pi),
    amplitudes are i.i.d. uniform on [0, 1], then the whole signal is scaled
    so that its n_points-grid L2 norm is 1.

    Args:
        omega: Angular bandwidth (rad/s)
        window: (t_start, t_end)
        seed: Seed for numpy's default_rng
        n_points: Grid used to define the unit norm

    Raises:
        ValueError: "window too short for one sinc center"
    """
    if not (np.isfinite(omega) and omega > 0):
        raise ValueError(f"omega must be positive, got {omega}")
    t_start, t_end = check_window(window)

    spacing = np.pi / omega
    if t_end - t_start < spacing * (1 - CENTER_COUNT_SLACK):
        raise ValueError("window too short for one sinc center")

    n_centers = int(math.floor((t_end - t_start) / spacing + CENTER_COUNT_SLACK)) + 1
    centers = t_start + spacing * np.arange(n_centers)

    rng = np.random.default_rng(seed)
    coeffs = rng.uniform(0.0, 1.0, n_centers)

    raw = BandlimitedSignal(omega, centers, coeffs, (t_start, t_end))
    norm = raw.to_grid(n_points).norm()
    if norm == 0:
        return raw
    return raw.scaled(1.0 / norm)


def estimate_bound(signal: Signal,
                   n_points: int = DEFAULT_GRID_POINTS,
                   oversample: int = BOUND_OVERSAMPLE,
                   inflation: float = BOUND_INFLATION,
                   window: Optional[Window] = None) -> float:
    """
    Signal bound c >= max |x(t)| over the window (the signal's own by default).

    Formula: c = inflation * max |x| on an (oversample * n_points)-point grid
    """
    grid = make_grid(signal.window if window is None else window, oversample * n_points)
    return float(inflation * np.max(np.abs(signal.eval(grid.times))))
