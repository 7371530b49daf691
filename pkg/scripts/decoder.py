"""
TEM Codec - Decoders
====================
Reconstruction of a bandlimited input from the spikes of one or more
integrate-and-fire machines.

Three decoders are provided:

    iterative             Alternating projections between the bandlimited set
                          and each machine's consistency set, averaged over
                          machines (POCS).
    closed_form           Pseudoinverse solve in the basis of sinc-smoothed
                          indicators of the merged spike intervals.
    midpoint_closed_form  Single-machine pseudoinverse solve with sinc
                          kernels centered at interval midpoints.

Grid operators
--------------
Interval integrals of a grid signal treat each sample as constant on its
cell [t_j - dt/2, t_j + dt/2). With W the matrix of fractional cell overlaps
of the intervals, the measurement is m(y) = dt * W y, and the interval
averaging operator B1 is the grid-orthogonal projection onto the rows of W:

    B1(y) = W^T G^{-1} m(y),    G = dt * W W^T

When spike times fall on cell boundaries this is exactly the per-interval
mean; in general it is the closest grid signal that keeps the integrals.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft, linalg

from encoder import MultiSpikeTrain, SpikeTrain, TemParams, merged_view
from errors import NumericalError
from kernels import DEFAULT_REL_CUTOFF, pinv_truncated, si, si_integral, spectral_mask
from signals import GridSignal


# =============================================================================
# CONFIGURATION
# =============================================================================

DEFAULT_MAX_ITER = 2000
DEFAULT_TOL = 1e-9

# Constraint intervals shorter than this are skipped (s)
MIN_INTERVAL = 1e-12

# Progress monitor on the distance to the consistency sets, which averaged
# projections never increase in exact arithmetic. Increases within
# INCREASE_SLACK (relative) are rounding; the loop aborts after
# MAX_CONSECUTIVE_INCREASES real increases in a row
MONITOR_START = 3
MAX_CONSECUTIVE_INCREASES = 10
INCREASE_SLACK = 1e-9

# Stall: less than PLATEAU_DECREASE relative progress over PLATEAU_WINDOW iterations
PLATEAU_WINDOW = 100
PLATEAU_DECREASE = 0.01

# A stalled or exhausted run still counts as converged when its residual is
# below this fraction of the largest target: grid cells cannot resolve the
# interval integrals any better
RESOLUTION_FLOOR = 1e-2

# Working grid for the iterative decoder: at least WORK_MIN_FACTOR times the
# output grid, and long enough that the bandlimited subspace has
# BAND_DIMENSION_RATIO times as many dimensions as there are constraints
WORK_MIN_FACTOR = 2
BAND_DIMENSION_RATIO = 4
MAX_WORK_POINTS = 2 ** 18

# Effective conditioning of the closed forms: singular directions rendering to
# less than RENDER_FRACTION of the rendering norm, or below SVD_FLOOR times
# sigma_max, are left out
RENDER_FRACTION = 1e-2
SVD_FLOOR = 1e-12

METHODS = ('iterative', 'closed_form', 'midpoint_closed_form')

Trains = Union[SpikeTrain, MultiSpikeTrain, Sequence[SpikeTrain]]


# =============================================================================
# RESULT AND CONSTRAINT TYPES
# =============================================================================

@dataclass
class DecodeResult:
    """
    Output of a decoder.

    Attributes:
        estimate: Reconstruction on the requested grid
        method: 'iterative', 'closed_form' or 'midpoint_closed_form'
        iterations: Number of POCS updates (0 for closed forms)
        residual_history: Max-channel consistency residual per iteration
        distance_history: RMS grid distance to the per-machine consistency
            sets per iteration (iterative only; nonincreasing)
        coefficients: Basis coefficients (closed forms only)
        condition_number: Conditioning of the map from interval integrals to
            the rendered estimate (closed forms only, see effective_condition)
        matrix_condition: sigma_max / smallest retained sigma of the kernel
            matrix (closed forms only)
        rank: Retained singular values (closed forms only)
        converged: Residual fell below tol, or the run stalled at the grid
            resolution floor (closed forms: always True)
        diagnostic: Why an iterative run stopped early, if it did
    """

    estimate: GridSignal
    method: str
    iterations: int = 0
    residual_history: np.ndarray = field(default_factory=lambda: np.array([]))
    distance_history: np.ndarray = field(default_factory=lambda: np.array([]))
    coefficients: Optional[np.ndarray] = None
    condition_number: Optional[float] = None
    matrix_condition: Optional[float] = None
    rank: Optional[int] = None
    converged: bool = True
    diagnostic: Optional[str] = None

    @property
    def final_residual(self) -> float:
        if len(self.residual_history) == 0:
            return float('nan')
        return float(self.residual_history[-1])

    def to_dict(self) -> Dict:
        return {
            'method': self.method,
            'iterations': self.iterations,
            'converged': self.converged,
            'final_residual': self.final_residual,
            'residual_history': [float(r) for r in self.residual_history],
            'condition_number': self.condition_number,
            'matrix_condition': self.matrix_condition,
            'rank': self.rank,
            'n_coefficients': None if self.coefficients is None else int(self.coefficients.size),
            'diagnostic': self.diagnostic,
        }


@dataclass(frozen=True)
class ConsistencyConstraint:
    """
    Interval integrals one machine imposes on the reconstruction.

    Attributes:
        intervals: (K, 2) array of (t_k, t_{k+1}) same-channel spike pairs
        targets: K interval integrals, q_k = 2 kappa delta - b (t_{k+1} - t_k)
        channel: Machine index
    """

    intervals: np.ndarray
    targets: np.ndarray
    channel: int = 0

    def __post_init__(self):
        intervals = np.asarray(self.intervals, dtype=float).reshape(-1, 2)
        targets = np.asarray(self.targets, dtype=float).ravel()
        object.__setattr__(self, 'intervals', intervals)
        object.__setattr__(self, 'targets', targets)

        if intervals.shape[0] != targets.size:
            raise ValueError("one target per interval is required")
        if not (np.all(np.isfinite(intervals)) and np.all(np.isfinite(targets))):
            raise ValueError("constraint intervals and targets must be finite")
        if np.any(intervals[:, 1] < intervals[:, 0]):
            raise ValueError("constraint intervals must have end >= start")
        if np.any(np.diff(intervals[:, 0]) <= 0) or np.any(intervals[1:, 0] < intervals[:-1, 1]):
            raise ValueError("constraint intervals must be strictly ordered and non-overlapping")

    @property
    def n_intervals(self) -> int:
        return self.targets.size

    @classmethod
    def from_times(cls, times: np.ndarray, params: TemParams, channel: int = 0) -> 'ConsistencyConstraint':
        times = np.asarray(times, dtype=float)
        intervals = np.column_stack([times[:-1], times[1:]]) if times.size > 1 else np.empty((0, 2))
        targets = 2 * params.kappa * params.delta - params.bias * np.diff(times)
        return cls(intervals=intervals, targets=targets, channel=channel)

    def within(self, t_start: float, t_end: float) -> 'ConsistencyConstraint':
        """Drop intervals not contained in [t_start, t_end]."""
        inside = (self.intervals[:, 0] >= t_start) & (self.intervals[:, 1] <= t_end)
        return ConsistencyConstraint(self.intervals[inside], self.targets[inside], self.channel)


def _channel_times(trains: Trains) -> Tuple[List[np.ndarray], TemParams]:
    """Per-machine spike times and the shared parameters."""
    if isinstance(trains, MultiSpikeTrain):
        return [trains.channel_times(ch) for ch in range(trains.n_channels)], trains.params
    if isinstance(trains, SpikeTrain):
        return [trains.times], trains.params

    trains = list(trains)
    if not trains:
        raise ValueError("no spike trains given")
    params = trains[0].params
    if any(t.params != params for t in trains):
        raise ValueError("all channels must share (kappa, delta, b)")
    return [t.times for t in trains], params


def _merged_times(trains: Trains) -> Tuple[np.ndarray, int, TemParams]:
    if isinstance(trains, (SpikeTrain, MultiSpikeTrain)):
        return merged_view(trains)
    per_channel, params = _channel_times(trains)
    return np.sort(np.concatenate(per_channel)), len(per_channel), params


def constraints_from_train(trains: Trains, grid: GridSignal) -> List[ConsistencyConstraint]:
    """
    One ConsistencyConstraint per machine, keeping only intervals inside the grid window.
    """
    per_channel, params = _channel_times(trains)
    return [
        ConsistencyConstraint.from_times(times, params, channel=ch).within(grid.t0, grid.t_end)
        for ch, times in enumerate(per_channel)
    ]


# =============================================================================
# GRID MEASUREMENT
# =============================================================================

class IntervalMeasurement:
    """
    Interval integrals of grid signals and the projections built on them.

    Holds the cell-overlap weights of one constraint on one grid together
    with the Cholesky factor of their Gram matrix.
    """

    def __init__(self, constraint: ConsistencyConstraint, t0: float, dt: float, n_points: int):
        self.dt = dt
        self.n_points = n_points
        self.channel = constraint.channel

        lengths = constraint.intervals[:, 1] - constraint.intervals[:, 0]
        keep = lengths >= MIN_INTERVAL
        if not np.all(keep):
            warnings.warn(
                f"skipping {int((~keep).sum())} degenerate interval(s) shorter than "
                f"{MIN_INTERVAL:g} s on channel {constraint.channel}",
                RuntimeWarning,
                stacklevel=3,
            )
        self.intervals = constraint.intervals[keep]
        self.targets = constraint.targets[keep]

        self.lo, self.hi = 0, 0
        self.weights = np.zeros((0, 0))
        self._factor = None
        if self.targets.size == 0:
            return

        starts, ends = self.intervals[:, 0], self.intervals[:, 1]
        t_end = t0 + dt * (n_points - 1)
        if starts.min() < t0 - dt / 2 or ends.max() > t_end + dt / 2:
            raise ValueError("constraint intervals must lie inside the grid window")

        self.lo = max(0, int(math.floor((starts.min() - t0) / dt + 0.5)))
        self.hi = min(n_points, int(math.floor((ends.max() - t0) / dt + 0.5)) + 1)
        cell_lo = t0 + dt * (np.arange(self.lo, self.hi) - 0.5)
        overlap = np.minimum(ends[:, None], cell_lo + dt) - np.maximum(starts[:, None], cell_lo)
        self.weights = np.clip(overlap, 0.0, None) / dt

        gram = dt * self.weights @ self.weights.T
        try:
            self._factor = linalg.cho_factor(gram)
        except linalg.LinAlgError as exc:
            raise NumericalError(
                f"interval Gram matrix of channel {constraint.channel} is not positive definite "
                f"(intervals narrower than the grid step?)"
            ) from exc

    @classmethod
    def on_grid(cls, constraint: ConsistencyConstraint, grid: GridSignal) -> 'IntervalMeasurement':
        return cls(constraint, grid.t0, grid.dt, grid.n)

    @property
    def n_intervals(self) -> int:
        return self.targets.size

    def measure(self, values: np.ndarray) -> np.ndarray:
        """Interval integrals of grid values."""
        if self.n_intervals == 0:
            return np.zeros(0)
        return self.dt * self.weights @ values[self.lo:self.hi]

    def _lift(self, coefficients: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n_points)
        if self.n_intervals:
            out[self.lo:self.hi] = self.weights.T @ linalg.cho_solve(self._factor, coefficients)
        return out

    def average(self, values: np.ndarray) -> np.ndarray:
        """B1: projection onto signals determined by their interval integrals."""
        return self._lift(self.measure(values))

    def correction(self, values: np.ndarray) -> np.ndarray:
        """Smallest grid update that makes the interval integrals hit the targets."""
        return self._lift(self.targets - self.measure(values))

    def residual(self, values: np.ndarray) -> float:
        if self.n_intervals == 0:
            return 0.0
        return float(np.max(np.abs(self.targets - self.measure(values))))

    def distance_sq(self, values: np.ndarray) -> float:
        """
        Squared grid distance to the consistency set.

        Equals the squared norm of correction(values), r^T G^{-1} r with
        r the target gap, without lifting back to the grid.
        """
        if self.n_intervals == 0:
            return 0.0
        gap = self.targets - self.measure(values)
        return float(max(gap @ linalg.cho_solve(self._factor, gap), 0.0))


# =============================================================================
# PROJECTIONS
# =============================================================================

def project_bandlimit(y: GridSignal, omega: float) -> GridSignal:
    """
    Ideal low-pass of a grid signal at cutoff omega.

    Raises:
        ValueError: "grid cannot represent bandwidth" when pi/dt <= omega
    """
    if np.pi / y.dt <= omega:
        raise ValueError(f"grid cannot represent bandwidth (pi/dt = {np.pi / y.dt:.4g} <= omega = {omega:.4g})")
    return y.with_values(spectral_mask(y.values, y.dt, omega))


def apply_B1(y: GridSignal, constraint: ConsistencyConstraint) -> GridSignal:
    """
    Replace y on each constraint interval by its interval average; zero elsewhere.
    """
    return y.with_values(IntervalMeasurement.on_grid(constraint, y).average(y.values))


def consistency_correction(y: GridSignal, constraint: ConsistencyConstraint) -> GridSignal:
    """
    B1(x - y) computed from the targets alone: (q_k - integral of y) spread over interval k.
    """
    return y.with_values(IntervalMeasurement.on_grid(constraint, y).correction(y.values))


def project_consistency(y: GridSignal, constraint: ConsistencyConstraint) -> GridSignal:
    """
    Projection onto the signals whose interval integrals equal the targets.

    Formula: P(y) = y + B1(x - y)
    """
    measurement = IntervalMeasurement.on_grid(constraint, y)
    return y.with_values(y.values + measurement.correction(y.values))


def measure_intervals(y: GridSignal, constraint: ConsistencyConstraint) -> np.ndarray:
    """Interval integrals of y over the constraint intervals."""
    return IntervalMeasurement.on_grid(constraint, y).measure(y.values)


# =============================================================================
# ITERATIVE DECODER
# =============================================================================

def pocs_iterate(constraints: Sequence[ConsistencyConstraint],
                 omega: float,
                 grid: GridSignal,
                 initial: Optional[GridSignal] = None,
                 max_iter: int = DEFAULT_MAX_ITER,
                 tol: float = DEFAULT_TOL) -> DecodeResult:
    """
    Averaged-projection POCS on a fixed grid.

        x_{l+1} = x_l + P_Omega( mean_i correction_i(x_l) )

    Each update is a unit gradient step on the mean squared distance to the
    consistency sets within the bandlimited subspace, so that distance is
    monitored for increases and stalls. The max-channel residual decides
    convergence. On oversampled inputs it levels off where the grid cells stop
    resolving the interval integrals; a stall below RESOLUTION_FLOOR times the
    largest target is reported as converged, a stall above it as a plateau.

    Args:
        constraints: One constraint per machine
        omega: Bandwidth (rad/s)
        grid: Grid the iteration runs on
        initial: Starting estimate on the same grid (default 0)
        max_iter: Maximum number of updates
        tol: Stop when the max-channel residual falls below tol

    Returns:
        DecodeResult with method 'iterative'
    """
    if np.pi / grid.dt <= omega:
        raise ValueError("grid cannot represent bandwidth")
    if max_iter < 0:
        raise ValueError("max_iter must be >= 0")

    measurements = [IntervalMeasurement.on_grid(c, grid) for c in constraints]
    if initial is None:
        x = np.zeros(grid.n)
    else:
        if not initial.same_grid(grid):
            raise ValueError("initial estimate must live on the decoding grid")
        x = initial.values.copy()

    history: List[float] = []
    distances: List[float] = []
    increases = 0
    warned = False
    converged = False
    diagnostic = None
    scale = max((float(np.max(np.abs(m.targets))) for m in measurements if m.n_intervals), default=0.0)
    floor = RESOLUTION_FLOOR * scale

    for iteration in range(max_iter + 1):
        residual = max((m.residual(x) for m in measurements), default=0.0)
        distance = math.sqrt(sum(m.distance_sq(x) for m in measurements) / max(len(measurements), 1))
        history.append(residual)
        distances.append(distance)

        if residual < tol:
            converged = True
            break
        if iteration == max_iter:
            if residual <= floor:
                converged = True
                diagnostic = f"max_iter reached at the grid resolution floor (residual {residual:.3e})"
            break

        if iteration > MONITOR_START and distance > distances[-2] * (1 + INCREASE_SLACK):
            increases += 1
            if not warned:
                warnings.warn(
                    f"distance to the consistency sets increased at iteration {iteration} "
                    f"({distances[-2]:.3e} -> {distance:.3e})",
                    RuntimeWarning,
                    stacklevel=2,
                )
                warned = True
            if increases > MAX_CONSECUTIVE_INCREASES:
                diagnostic = (
                    f"distance to the consistency sets increased for {increases} consecutive "
                    "iterations; the projections are numerically unstable on this grid"
                )
                warnings.warn(f"aborting POCS: {diagnostic}", RuntimeWarning, stacklevel=2)
                break
        else:
            increases = 0

        if iteration >= PLATEAU_WINDOW and distance > (1 - PLATEAU_DECREASE) * distances[-1 - PLATEAU_WINDOW]:
            if residual <= floor:
                converged = True
                diagnostic = (
                    f"stalled at the grid resolution floor (residual {residual:.3e}) "
                    f"after {iteration} iterations"
                )
            else:
                diagnostic = (
                    f"consistency residual plateau at {residual:.3e} after {iteration} iterations"
                )
                warnings.warn(diagnostic, RuntimeWarning, stacklevel=2)
            break

        step = np.zeros(grid.n)
        for m in measurements:
            step += m.correction(x)
        x = x + spectral_mask(step / max(len(measurements), 1), grid.dt, omega)

    return DecodeResult(
        estimate=grid.with_values(x),
        method='iterative',
        iterations=len(history) - 1,
        residual_history=np.asarray(history),
        distance_history=np.asarray(distances),
        converged=converged,
        diagnostic=diagnostic,
    )


def working_grid(grid: GridSignal, omega: float, n_constraints: int) -> Tuple[GridSignal, int]:
    """
    Zero-padded grid the iterative decoder runs on, and the left pad in points.

    The spectral mask treats the grid as periodic; padding keeps wraparound
    away from the window and leaves room for the bandlimited subspace.
    """
    needed = BAND_DIMENSION_RATIO * max(n_constraints, 1) * np.pi / (omega * grid.dt)
    n_work = max(WORK_MIN_FACTOR * grid.n, int(math.ceil(needed)))
    n_work = fft.next_fast_len(min(n_work, MAX_WORK_POINTS), real=True)
    n_work = max(n_work, grid.n)
    pad_left = (n_work - grid.n) // 2
    work = GridSignal(t0=grid.t0 - pad_left * grid.dt, dt=grid.dt, values=np.zeros(n_work))
    return work, pad_left


def decode_iterative(trains: Trains,
                     omega: float,
                     grid: GridSignal,
                     max_iter: int = DEFAULT_MAX_ITER,
                     tol: float = DEFAULT_TOL,
                     initial: Optional[GridSignal] = None) -> DecodeResult:
    """
    Iterative POCS reconstruction from one or several machines.

    Every machine contributes one consistency set; each update adds the
    bandlimited average of the per-machine corrections. The iteration runs
    on a padded working grid and the estimate is cropped to `grid`.

    Args:
        trains: SpikeTrain, MultiSpikeTrain or list of SpikeTrains sharing params
        omega: Bandwidth (rad/s)
        grid: Output grid
        max_iter: Maximum number of updates
        tol: Target max-channel residual
        initial: Optional starting estimate on `grid`

    Returns:
        DecodeResult
    """
    if np.pi / grid.dt <= omega:
        raise ValueError("grid cannot represent bandwidth")

    per_channel, _ = _channel_times(trains)
    n_constraints = sum(max(times.size - 1, 0) for times in per_channel)
    if n_constraints == 0:
        raise ValueError("fewer than 2 usable spikes")

    # Spikes encoded past the output window still constrain the estimate
    # as long as they land on the padded grid
    work, pad_left = working_grid(grid, omega, n_constraints)
    constraints = constraints_from_train(trains, work)
    if sum(c.n_intervals for c in constraints) == 0:
        raise ValueError("fewer than 2 usable spikes")

    start = None
    if initial is not None:
        if not initial.same_grid(grid):
            raise ValueError("initial estimate must live on the output grid")
        values = np.zeros(work.n)
        values[pad_left:pad_left + grid.n] = initial.values
        start = work.with_values(values)

    result = pocs_iterate(constraints, omega, work, initial=start, max_iter=max_iter, tol=tol)
    result.estimate = grid.with_values(result.estimate.values[pad_left:pad_left + grid.n])
    return result


# =============================================================================
# ANALYTIC KERNEL INTEGRALS
# =============================================================================

def indicator_kernel(t, a, b, omega: float) -> np.ndarray:
    """
    Sinc-smoothed interval indicator (1_[a,b) * g)(t).

    Formula: [Si(Omega (t - a)) - Si(Omega (t - b))] / pi
    """
    t = np.asarray(t, dtype=float)
    return (si(omega * (t - a)) - si(omega * (t - b))) / np.pi


def indicator_kernel_integral(c, d, a, b, omega: float) -> np.ndarray:
    """
    Integral of (1_[a,b) * g) over [c, d].

    Formula: [F(O(d-a)) - F(O(d-b)) - F(O(c-a)) + F(O(c-b))] / (pi O),
             F(x) = x Si(x) + cos(x), O = Omega
    """
    c, d, a, b = (np.asarray(v, dtype=float) for v in (c, d, a, b))
    total = (si_integral(omega * (d - a)) - si_integral(omega * (d - b))
             - si_integral(omega * (c - a)) + si_integral(omega * (c - b)))
    return total / (np.pi * omega)


def sinc_interval_integral(c, d, s, omega: float) -> np.ndarray:
    """
    Integral of g(u - s) over [c, d].

    Formula: [Si(Omega (d - s)) - Si(Omega (c - s))] / pi
    """
    c, d, s = (np.asarray(v, dtype=float) for v in (c, d, s))
    return (si(omega * (d - s)) - si(omega * (c - s))) / np.pi


def sinc_kernel(t, omega: float) -> np.ndarray:
    """g(t) = sin(Omega t) / (pi t)."""
    return (omega / np.pi) * np.sinc(omega * np.asarray(t, dtype=float) / np.pi)


# =============================================================================
# CLOSED-FORM DECODERS
# =============================================================================

def _solve(matrix: np.ndarray, targets: np.ndarray, rel_cutoff: float) -> Tuple[np.ndarray, int, float, float]:
    """Coefficients by truncated pseudoinverse; flags rank deficiency."""
    inverse = pinv_truncated(matrix, rel_cutoff)
    coefficients = inverse.to_array() @ targets
    if inverse.rank < min(matrix.shape):
        warnings.warn(
            f"kernel matrix is rank-deficient (rank {inverse.rank} of {min(matrix.shape)}, "
            f"condition number {inverse.condition_number:.3e})",
            RuntimeWarning,
            stacklevel=3,
        )
    residual = float(np.max(np.abs(matrix @ coefficients - targets))) if targets.size else 0.0
    return coefficients, inverse.rank, inverse.condition_number, residual


def effective_condition(matrix: np.ndarray, render: np.ndarray, dt: float) -> float:
    """
    Conditioning of the map from interval integrals to the rendered estimate.

    Smoothed-indicator bases are redundant whenever the spikes oversample the
    band, so the kernel matrix has near-null directions for any spike layout.
    Those directions render to almost nothing on the grid and are skipped:
    the result is sigma_max over the smallest singular value whose right
    singular vector renders to at least RENDER_FRACTION of the rendering
    operator norm. It grows as 1/shift when two machines fire ever closer
    together.

    Args:
        matrix: Kernel matrix (rows = measured intervals, cols = basis functions)
        render: Basis functions sampled on the output grid (points x cols)
        dt: Output grid step

    Returns:
        Effective condition number (inf when no direction qualifies)
    """
    _, s, vt = np.linalg.svd(matrix, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return float('inf')
    scaled = math.sqrt(dt) * render
    gains = np.linalg.norm(scaled @ vt.T, axis=0)
    usable = (s >= SVD_FLOOR * s[0]) & (gains >= RENDER_FRACTION * np.linalg.norm(scaled, 2))
    if not np.any(usable):
        return float('inf')
    return float(s[0] / s[usable].min())


def kernel_matrix(times: np.ndarray, n_channels: int, omega: float) -> np.ndarray:
    """
    H[l, k] = integral over [t_l, t_{l+M}] of the smoothed indicator of [t_k, t_{k+1}).

    Rows l = 0..N-M-1, columns k = 0..N-2 over merged spike times.
    """
    rows_lo, rows_hi = times[:-n_channels], times[n_channels:]
    cols_lo, cols_hi = times[:-1], times[1:]
    return indicator_kernel_integral(rows_lo[:, None], rows_hi[:, None],
                                     cols_lo[None, :], cols_hi[None, :], omega)


def decode_closed_form(trains: Trains,
                       omega: float,
                       grid: GridSignal,
                       rel_cutoff: float = DEFAULT_REL_CUTOFF) -> DecodeResult:
    """
    Closed-form reconstruction in the basis of smoothed merged-interval indicators.

    Builds q~_k = 2 kappa delta - b (t~_{k+M} - t~_k) over the merged spikes,
    the matrix kernel_matrix(), solves c = pinv(H~) q~ and renders
    sum_k c_k (1_[t~_k, t~_{k+1}) * g) on the grid.
    """
    times, m, params = _merged_times(trains)
    if times.size < m + 1:
        raise ValueError(f"closed-form decoding needs at least {m + 1} spikes, got {times.size}")

    targets = 2 * params.kappa * params.delta - params.bias * (times[m:] - times[:-m])
    matrix = kernel_matrix(times, m, omega)
    coefficients, rank, condition, residual = _solve(matrix, targets, rel_cutoff)

    render = indicator_kernel(grid.times[:, None], times[:-1], times[1:], omega)
    return DecodeResult(
        estimate=grid.with_values(render @ coefficients),
        method='closed_form',
        residual_history=np.array([residual]),
        coefficients=coefficients,
        condition_number=effective_condition(matrix, render, grid.dt),
        matrix_condition=condition,
        rank=rank,
    )


def decode_closed_form_midpoint(trains: Trains,
                                omega: float,
                                grid: GridSignal,
                                rel_cutoff: float = DEFAULT_REL_CUTOFF) -> DecodeResult:
    """
    Single-machine closed form with sinc kernels at interval midpoints.

    H[l, k] = [Si(Omega (t_{l+1} - s_k)) - Si(Omega (t_l - s_k))] / pi,
    s_k = (t_k + t_{k+1}) / 2; estimate = sum_k c_k g(t - s_k).
    """
    times, m, params = _merged_times(trains)
    if m != 1:
        raise ValueError("midpoint closed form supports a single channel only")
    if times.size < 2:
        raise ValueError("fewer than 2 usable spikes")

    targets = 2 * params.kappa * params.delta - params.bias * np.diff(times)
    midpoints = 0.5 * (times[:-1] + times[1:])
    matrix = sinc_interval_integral(times[:-1, None], times[1:, None], midpoints[None, :], omega)
    coefficients, rank, condition, residual = _solve(matrix, targets, rel_cutoff)

    render = sinc_kernel(grid.times[:, None] - midpoints[None, :], omega)
    return DecodeResult(
        estimate=grid.with_values(render @ coefficients),
        method='midpoint_closed_form',
        residual_history=np.array([residual]),
        coefficients=coefficients,
        condition_number=effective_condition(matrix, render, grid.dt),
        matrix_condition=condition,
        rank=rank,
    )


def decode(trains: Trains,
           omega: float,
           grid: GridSignal,
           method: str = 'closed_form',
           max_iter: int = DEFAULT_MAX_ITER,
           tol: float = DEFAULT_TOL,
           rel_cutoff: float = DEFAULT_REL_CUTOFF) -> DecodeResult:
    """Dispatch to one of METHODS."""
    if method == 'iterative':
        return decode_iterative(trains, omega, grid, max_iter=max_iter, tol=tol)
    if method == 'closed_form':
        return decode_closed_form(trains, omega, grid, rel_cutoff=rel_cutoff)
    if method == 'midpoint_closed_form':
        return decode_closed_form_midpoint(trains, omega, grid, rel_cutoff=rel_cutoff)
    raise ValueError(f"unknown decoding method '{method}' (choose from {', '.join(METHODS)})")
