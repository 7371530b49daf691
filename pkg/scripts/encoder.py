"""
TEM Codec - Integrate-and-Fire Time Encoding
============================================
Single- and M-channel integrate-and-fire time encoding machines (TEMs).

A TEM with parameters (kappa, delta, b) integrates (x(t) + b) / kappa and
emits a spike each time the integrator reaches delta, resetting it to -delta.
Between consecutive spikes t_k < t_{k+1} of one machine:

    integral of x over [t_k, t_{k+1}] = 2*kappa*delta - b*(t_{k+1} - t_k)

M machines sharing (kappa, delta, b) and started from different integrator
values are shifted copies of each other (mod 2*delta); with nonzero shifts
their spikes interleave strictly.

Spike times are located by bisection on the signal's exact primitive.
A cumulative-sum encoder is kept as a cross-check.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from signals import Signal, Window, check_window, estimate_bound


# =============================================================================
# CONFIGURATION
# =============================================================================

# Absolute tolerance of the bisection that locates each spike (s)
SPIKE_TOLERANCE = 1e-12

# Cumulative-sum encoder uses window / DISCRETE_STEPS as its step
DISCRETE_STEPS = 10 ** 5

# Allowance on the rate bound for finite-window edge effects
RATE_EDGE_ALLOWANCE = 0.05

# Tolerance on sum(shifts) = 0 (mod 2 delta)
SHIFT_SUM_TOLERANCE = 1e-9


# =============================================================================
# PARAMETERS
# =============================================================================

@dataclass(frozen=True)
class TemParams:
    """
    Parameters of one integrate-and-fire machine.

    Attributes:
        kappa: Integrator constant
        delta: Threshold
        bias: Bias b added to the input before integration
    """

    kappa: float
    delta: float
    bias: float

    def __post_init__(self):
        for name in ('kappa', 'delta', 'bias'):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be strictly positive, got {value}")

    def period_bound(self, c: float) -> float:
        """
        Largest gap between consecutive spikes of one machine when |x| <= c < b.

        Formula: 2 * kappa * delta / (b - c)
        """
        if c >= self.bias:
            return float('inf')
        return 2 * self.kappa * self.delta / (self.bias - c)

    def bandwidth_bound(self, c: float, n_channels: int = 1) -> float:
        """
        Sufficient bandwidth for unique reconstruction from n_channels shifted machines.

        Formula: Omega < M * pi * (b - c) / (2 * kappa * delta)
        """
        return n_channels * np.pi * (self.bias - c) / (2 * self.kappa * self.delta)

    def to_dict(self) -> Dict[str, float]:
        return {'kappa': self.kappa, 'delta': self.delta, 'bias': self.bias}


def wrap_integrator(value: float, delta: float) -> float:
    """Map an integrator value into [-delta, delta) modulo 2*delta."""
    return float((value + delta) % (2 * delta) - delta)


@dataclass(frozen=True)
class MultiChannelConfig:
    """
    M machines with shared parameters and integrator shifts alpha_1..alpha_M.

    Machine i+1 leads machine i by alpha_i (mod 2 delta); alpha_M closes the
    cycle so that sum(alpha) = 0 (mod 2 delta). The shifts are realized as
    initial integrator values y_i(t_start). A single machine has no shifts.
    """

    params: TemParams
    shifts: Tuple[float, ...]
    initial_values: Tuple[float, ...]

    def __post_init__(self):
        shifts = tuple(float(a) for a in self.shifts)
        initial = tuple(float(y) for y in self.initial_values)
        object.__setattr__(self, 'shifts', shifts)
        object.__setattr__(self, 'initial_values', initial)

        delta = self.params.delta
        if len(initial) == 0:
            raise ValueError("at least one channel is required")
        if len(initial) > 1 and len(shifts) != len(initial):
            raise ValueError("an M-channel config needs exactly M shifts")
        if len(initial) == 1 and shifts:
            raise ValueError("a single channel has no integrator shifts")
        for a in shifts:
            if not 0.0 <= a < 2 * delta:
                raise ValueError(f"shifts must lie in [0, 2*delta), got {a}")
        if shifts:
            residue = math.fmod(sum(shifts), 2 * delta)
            if min(residue, 2 * delta - residue) > SHIFT_SUM_TOLERANCE:
                raise ValueError("shifts must sum to a multiple of 2*delta")
        for y in initial:
            if not -delta <= y < delta:
                raise ValueError(f"initial integrator values must lie in [-delta, delta), got {y}")

    @property
    def n_channels(self) -> int:
        return len(self.initial_values)

    @classmethod
    def single(cls, params: TemParams, y0: Optional[float] = None) -> 'MultiChannelConfig':
        y0 = -params.delta if y0 is None else y0
        return cls(params=params, shifts=(), initial_values=(y0,))

    @classmethod
    def from_shifts(cls, params: TemParams, shifts: Sequence[float],
                    y1: Optional[float] = None) -> 'MultiChannelConfig':
        """
        Build a config from M-1 or M shifts.

        With M-1 shifts the closing shift alpha_M = -sum(alpha) mod 2 delta is
        appended. Initial values follow y_{i+1} = y_1 + sum_{j<=i} alpha_j (wrapped).
        """
        delta = params.delta
        y1 = -delta if y1 is None else y1
        shifts = [float(a) for a in shifts]
        if not shifts:
            return cls.single(params, y1)

        total = sum(shifts)
        closing = (-total) % (2 * delta)
        if min(closing, 2 * delta - closing) > SHIFT_SUM_TOLERANCE:
            shifts.append(closing)

        initial = [wrap_integrator(y1, delta)]
        for a in shifts[:-1]:
            initial.append(wrap_integrator(initial[-1] + a, delta))
        return cls(params=params, shifts=tuple(shifts), initial_values=tuple(initial))

    @classmethod
    def equal(cls, params: TemParams, n_channels: int,
              y1: Optional[float] = None) -> 'MultiChannelConfig':
        """Equally spaced shifts alpha_i = 2 delta / M."""
        if n_channels < 1:
            raise ValueError("n_channels must be >= 1")
        if n_channels == 1:
            return cls.single(params, y1)
        return cls.from_shifts(params, [2 * params.delta / n_channels] * n_channels, y1)

    def to_dict(self) -> Dict:
        return {
            'params': self.params.to_dict(),
            'shifts': list(self.shifts),
            'initial_values': list(self.initial_values),
        }


# =============================================================================
# SPIKE TRAINS
# =============================================================================

@dataclass(frozen=True)
class SpikeTrain:
    """
    Spike times of one machine.

    Attributes:
        times: Strictly increasing spike times
        params: Machine parameters
        window: Encoding window
        y0: Integrator value at window start (default -delta, as in encode())
        metadata: Free-form provenance (jitter level, seed, ...)
    """

    times: np.ndarray
    params: TemParams
    window: Window
    y0: Optional[float] = None
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).ravel()
        object.__setattr__(self, 'times', times)
        if self.y0 is None:
            object.__setattr__(self, 'y0', -self.params.delta)
        if not np.all(np.isfinite(times)):
            raise ValueError("spike times must be finite")
        if np.any(np.diff(times) <= 0):
            raise ValueError("spike times must be strictly increasing")

    @property
    def n_spikes(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class MultiSpikeTrain:
    """
    Merged spikes of M machines, sorted by time, with channel provenance.
    """

    times: np.ndarray
    channels: np.ndarray
    config: MultiChannelConfig
    window: Window
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).ravel()
        channels = np.asarray(self.channels, dtype=int).ravel()
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'channels', channels)
        if times.size != channels.size:
            raise ValueError("times and channels must have equal length")
        if not np.all(np.isfinite(times)):
            raise ValueError("spike times must be finite")
        if np.any(np.diff(times) < 0):
            raise ValueError("merged spike times must be sorted")
        if channels.size and (channels.min() < 0 or channels.max() >= self.config.n_channels):
            raise ValueError("channel index out of range")

    @property
    def params(self) -> TemParams:
        return self.config.params

    @property
    def n_channels(self) -> int:
        return self.config.n_channels

    @property
    def n_spikes(self) -> int:
        return self.times.size

    @property
    def events(self) -> List[Tuple[float, int]]:
        """(time, channel) pairs in time order."""
        return list(zip(self.times.tolist(), self.channels.tolist()))

    def channel_times(self, channel: int) -> np.ndarray:
        return np.sort(self.times[self.channels == channel])

    def as_trains(self) -> List[SpikeTrain]:
        """Split into one SpikeTrain per machine."""
        return [
            SpikeTrain(
                times=self.channel_times(ch),
                params=self.params,
                window=self.window,
                y0=self.config.initial_values[ch],
                metadata=dict(self.metadata),
            )
            for ch in range(self.n_channels)
        ]


AnyTrain = Union[SpikeTrain, MultiSpikeTrain]


def merged_view(train: AnyTrain) -> Tuple[np.ndarray, int, TemParams]:
    """(merged times, number of machines, params) for either train type."""
    if isinstance(train, MultiSpikeTrain):
        return train.times, train.n_channels, train.params
    return train.times, 1, train.params


# =============================================================================
# ENCODING
# =============================================================================

def _check_bias(signal: Signal, params: TemParams, c: Optional[float],
                window: Optional[Window] = None) -> float:
    if c is None:
        c = estimate_bound(signal, window=window)
    if not np.isfinite(c):
        raise ValueError("signal is not finite over the window")
    if params.bias <= c:
        warnings.warn(
            f"bias does not exceed signal bound (b={params.bias:.4g}, c={c:.4g}); "
            "spiking may stall, encoding is best effort",
            RuntimeWarning,
            stacklevel=3,
        )
    return c


def _encode_analytic(signal: Signal, params: TemParams, y0: float,
                     tolerance: float, window: Window) -> np.ndarray:
    """Spike times by bisection on (X(t) - X(t_prev) + b (t - t_prev)) / kappa."""
    kappa, delta, b = params.kappa, params.delta, params.bias
    t_start, t_end = window
    step = 2 * kappa * delta / b

    times = []
    lo = t_start
    x_lo = signal.primitive(lo)
    target = delta - y0

    def excess(t: float) -> float:
        return (signal.primitive(t) - x_lo + b * (t - lo)) / kappa - target

    # A crossing within tolerance of t_end still counts
    slack = tolerance * b / kappa

    while excess(t_end) >= -slack:
        # Bracket the first crossing after lo
        left, right = lo, min(lo + step, t_end)
        while right < t_end and excess(right) < 0:
            left, right = right, min(right + step, t_end)

        while right - left > tolerance:
            mid = 0.5 * (left + right)
            if excess(mid) >= 0:
                right = mid
            else:
                left = mid

        spike = 0.5 * (left + right)
        if times and spike <= times[-1]:
            break
        times.append(spike)
        lo = spike
        x_lo = signal.primitive(lo)
        target = 2 * delta

    return np.asarray(times)


def _encode_discrete(signal: Signal, params: TemParams, y0: float,
                     n_steps: int, window: Window) -> np.ndarray:
    """Spike times from a cumulative sum of (x + b) dt / kappa on a fine grid."""
    t_start, t_end = window
    dt = (t_end - t_start) / n_steps
    t = t_start + dt * np.arange(n_steps + 1)
    run_sum = np.concatenate([[0.0], np.cumsum(dt * (signal.eval(t[:-1]) + params.bias))]) / params.kappa

    first = params.delta - y0
    if run_sum[-1] < first:
        return np.array([])
    n_spikes = int(math.floor((run_sum[-1] - first) / (2 * params.delta))) + 1
    thresholds = first + 2 * params.delta * np.arange(n_spikes)
    positions = np.searchsorted(run_sum, thresholds, side='left')
    positions = positions[positions <= n_steps]
    return t[np.unique(positions)]


def encode(signal: Signal,
           params: TemParams,
           y0: Optional[float] = None,
           c: Optional[float] = None,
           mode: str = 'analytic',
           tolerance: float = SPIKE_TOLERANCE,
           n_steps: int = DISCRETE_STEPS,
           window: Optional[Window] = None) -> SpikeTrain:
    """
    Encode a signal with one integrate-and-fire machine.

    The first spike is where the integrator climbs from y0 to delta, every
    later one where it climbs a further 2*delta (reset to -delta at each spike).

    Args:
        signal: Input with eval/primitive over its window
        params: Machine parameters
        y0: Integrator value at window start, in [-delta, delta) (default -delta)
        c: Known bound on |x| (estimated when omitted)
        mode: 'analytic' (bisection on the primitive) or 'discrete' (cumulative sum)
        tolerance: Bisection tolerance on each spike time
        n_steps: Number of cumulative-sum steps in discrete mode
        window: Encoding window (default: the signal's own); may extend past it

    Returns:
        SpikeTrain
    """
    y0 = -params.delta if y0 is None else float(y0)
    if not -params.delta <= y0 < params.delta:
        raise ValueError(f"y0 must lie in [-delta, delta), got {y0}")
    window = signal.window if window is None else check_window(window)
    _check_bias(signal, params, c, window)

    if mode == 'analytic':
        times = _encode_analytic(signal, params, y0, tolerance, window)
    elif mode == 'discrete':
        times = _encode_discrete(signal, params, y0, n_steps, window)
    else:
        raise ValueError(f"unknown encoding mode '{mode}'")

    return SpikeTrain(times=times, params=params, window=window, y0=y0,
                      metadata={'mode': mode})


def encode_multi(signal: Signal,
                 config: MultiChannelConfig,
                 c: Optional[float] = None,
                 mode: str = 'analytic',
                 window: Optional[Window] = None) -> MultiSpikeTrain:
    """
    Encode a signal with M shifted machines and merge their spikes.

    Raises:
        ValueError: "zero shift: channels degenerate" if any shift is zero
    """
    if any(a == 0.0 for a in config.shifts):
        raise ValueError("zero shift: channels degenerate")
    window = signal.window if window is None else check_window(window)
    c = _check_bias(signal, config.params, c, window)

    times, channels = [], []
    for ch, y0 in enumerate(config.initial_values):
        train = encode(signal, config.params, y0=y0, c=c, mode=mode, window=window)
        times.append(train.times)
        channels.append(np.full(train.n_spikes, ch))

    times = np.concatenate(times)
    channels = np.concatenate(channels)
    order = np.argsort(times, kind='mergesort')
    multi = MultiSpikeTrain(
        times=times[order],
        channels=channels[order],
        config=config,
        window=window,
        metadata={'mode': mode},
    )

    if config.n_channels > 1 and not check_interleaving(multi):
        warnings.warn("merged spikes are not strictly interleaved", RuntimeWarning, stacklevel=2)
    return multi


# =============================================================================
# INTEGRATOR TRACES AND ORDERING
# =============================================================================

def integrator_trace(signal: Signal, train: SpikeTrain, times) -> np.ndarray:
    """
    Integrator output y(t) of the machine that produced the train.

    Formula: y(t) = y0 + (X(t) - X(t_start) + b (t - t_start)) / kappa - 2 delta * #spikes <= t
    """
    times = np.asarray(times, dtype=float)
    p = train.params
    t_start = train.window[0]
    drive = (signal.primitive(times) - signal.primitive(t_start) + p.bias * (times - t_start)) / p.kappa
    fired = np.searchsorted(train.times, times, side='right')
    return train.y0 + drive - 2 * p.delta * fired


def check_interleaving(multi: MultiSpikeTrain) -> bool:
    """
    Between two consecutive spikes of any machine, every other machine
    fires exactly once.
    """
    m = multi.n_channels
    if m == 1:
        return True
    channels = multi.channels
    for ch in range(m):
        positions = np.flatnonzero(channels == ch)
        for left, right in zip(positions[:-1], positions[1:]):
            between = channels[left + 1:right]
            if between.size != m - 1 or np.unique(between).size != m - 1:
                return False
    return True


# =============================================================================
# INTERVAL INTEGRALS
# =============================================================================

def interval_integrals(train: AnyTrain) -> np.ndarray:
    """
    Integrals of the input between consecutive spikes of the same machine.

    Single machine:  q_k = 2 kappa delta - b (t_{k+1} - t_k)
    M machines:      q_k = 2 kappa delta - b (t_{k+M} - t_k) over the merged train
    """
    times, m, params = merged_view(train)
    if times.size < m + 1:
        raise ValueError("fewer than 2 usable spikes")
    return 2 * params.kappa * params.delta - params.bias * (times[m:] - times[:-m])


# =============================================================================
# DIAGNOSTICS
# =============================================================================

@dataclass(frozen=True)
class RateReport:
    """
    Spike-rate and separation diagnostics of an encoding.

    Attributes:
        channel_rates: (count - 1) / span per machine
        combined_rate: (count - 1) / span of the merged train
        rate_bound: M (b - c) / (2 kappa delta)
        rate_ok: combined_rate >= rate_bound * (1 - edge allowance)
        min_gap: Smallest gap between consecutive merged spikes
        separation_bound: kappa * min(alpha) / (b + c), None for one machine
        separation_ok: min_gap >= separation_bound, None for one machine
    """

    channel_rates: Tuple[float, ...]
    combined_rate: float
    rate_bound: float
    rate_ok: bool
    min_gap: float
    separation_bound: Optional[float]
    separation_ok: Optional[bool]

    def to_dict(self) -> Dict:
        return {
            'channel_rates': list(self.channel_rates),
            'combined_rate': self.combined_rate,
            'rate_bound': self.rate_bound,
            'rate_ok': self.rate_ok,
            'min_gap': self.min_gap,
            'separation_bound': self.separation_bound,
            'separation_ok': self.separation_ok,
        }


def _rate(times: np.ndarray) -> float:
    if times.size < 2:
        return 0.0
    return (times.size - 1) / (times[-1] - times[0])


def diagnostics(train: AnyTrain, c: float) -> RateReport:
    """
    Average sampling rate against M (b - c)/(2 kappa delta) and minimum
    merged separation against kappa * min(alpha) / (b + c).
    """
    times, m, params = merged_view(train)
    if isinstance(train, MultiSpikeTrain):
        channel_rates = tuple(_rate(train.channel_times(ch)) for ch in range(m))
        shifts = train.config.shifts
    else:
        channel_rates = (_rate(times),)
        shifts = ()

    combined = _rate(times)
    bound = m * (params.bias - c) / (2 * params.kappa * params.delta)
    min_gap = float(np.min(np.diff(times))) if times.size > 1 else float('inf')

    if shifts:
        # Shortest time for the integrator to move by alpha: slope at most (b + c) / kappa
        separation = params.kappa * min(shifts) / (params.bias + c)
        separation_ok = bool(min_gap >= separation)
    else:
        separation, separation_ok = None, None

    return RateReport(
        channel_rates=channel_rates,
        combined_rate=combined,
        rate_bound=bound,
        rate_ok=bool(combined >= bound * (1 - RATE_EDGE_ALLOWANCE)),
        min_gap=min_gap,
        separation_bound=separation,
        separation_ok=separation_ok,
    )


# =============================================================================
# TIMING NOISE
# =============================================================================

def jitter_sigma(train: AnyTrain, snr_db: float) -> float:
    """
    Standard deviation of the timing noise for a given SNR.

    Formula: sigma = RMS(merged inter-spike interval) * 10^(-snr_db / 20)
    """
    times, _, _ = merged_view(train)
    gaps = np.diff(times)
    if gaps.size == 0:
        return 0.0
    return float(np.sqrt(np.mean(gaps ** 2)) * 10 ** (-snr_db / 20))


def add_time_jitter(train: AnyTrain, snr_db: Optional[float], seed: Optional[int] = None) -> AnyTrain:
    """
    Add i.i.d. zero-mean Gaussian noise to every spike time.

    snr_db=None or +inf returns the train unchanged. Jittered times are
    re-sorted; whether the merged order changed is recorded in metadata.
    """
    if snr_db is None or snr_db == float('inf'):
        return train
    if not np.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite or +inf, got {snr_db}")

    sigma = jitter_sigma(train, snr_db)
    rng = np.random.default_rng(seed)
    times, _, _ = merged_view(train)
    noisy = times + rng.normal(0.0, sigma, times.size)
    order = np.argsort(noisy, kind='mergesort')
    metadata = dict(train.metadata)
    metadata.update({
        'snr_db': float(snr_db),
        'jitter_sigma': sigma,
        'jitter_seed': seed,
        'reordered': bool(np.any(order != np.arange(times.size))),
    })

    if isinstance(train, MultiSpikeTrain):
        return MultiSpikeTrain(
            times=noisy[order],
            channels=train.channels[order],
            config=train.config,
            window=train.window,
            metadata=metadata,
        )
    return SpikeTrain(times=noisy[order], params=train.params, window=train.window,
                      y0=train.y0, metadata=metadata)
