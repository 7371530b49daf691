"""
TEM Codec - Parameter Sweeps
============================
Runs the encode -> (jitter) -> decode -> score protocol over a grid of
bandwidths, channel counts, integrator shifts and jitter levels.

One trial:
    1. random unit-norm sinc expansion with bandwidth omega
    2. c = signal bound over the encoding window, b = c + bias_margin
    3. M-channel encoding over the window widened by encode_margin on both
       sides, then optional timing jitter
    4. decode and score with the middle-90% MSE

Usage:
    python sweep.py data/sweeps/fig8.json --out results/fig8
    python sweep.py data/sweeps/fig10.json --out results/fig10 --trials 5 --threads 1

Outputs (in --out):
    trials.csv        one row per trial, byte-identical across reruns
    trials.parquet    same rows plus runtime_ms
    cells.csv         per-cell aggregates
    fig*.csv          per-figure pivots of the median MSE
    conditioning.csv  shift vs condition number rank correlation (with fig10)
    sweep_spec.json   effective configuration
    sweep_log.txt     one line appended per run
"""

import argparse
import json
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from decoder import DEFAULT_MAX_ITER, DEFAULT_TOL, METHODS, decode
from encoder import (MultiChannelConfig, TemParams, add_time_jitter, check_interleaving,
                     diagnostics, encode_multi)
from errors import DataError
from figures import ALL_FIGURES, TABLE_FLOAT_FORMAT, save_tables
from metrics import mse_mid90
from signals import DEFAULT_GRID_POINTS, estimate_bound, generate_random_signal, make_grid

# =============================================================================
# CONFIGURATION
# =============================================================================

THREADS_ENV = 'TEMCODEC_THREADS'

SHIFT_POLICIES = ('equal', 'explicit', 'log')

# Columns of trials.csv, in order (runtime_ms only goes to parquet)
TRIAL_COLUMNS = [
    'cell_index', 'trial', 'omega', 'omega_over_bound', 'm', 'shift_config', 'shift_fraction',
    'snr_db', 'seed_used', 'signal_bound', 'n_spikes', 'combined_rate', 'rate_ok', 'interleaved',
    'mse_mid90', 'iterations', 'final_residual', 'converged', 'condition_number', 'rank',
    'n_warnings', 'status',
]

LOG_FILE_NAME = 'sweep_log.txt'


# =============================================================================
# SWEEP SPECIFICATION
# =============================================================================

@dataclass
class SweepSpec:
    """
    Sweep configuration; JSON files use exactly these field names.

    Attributes:
        name: Label used in logs
        omega_list: Bandwidths in rad/s, or multiples of the M-channel bound
            when omega_relative is true
        omega_relative: Interpret omega_list relative to M pi (b - c) / (2 kappa delta)
        m_list: Channel counts
        shift_policy: 'equal' (2 delta / M each), 'explicit' (alpha_1 = f * delta
            for f in shift_fractions, remaining shifts equal), or 'log'
            (alpha_1 = 10^-k * delta for k in log_shift_decades)
        shift_fractions: alpha_1 / delta values for the explicit policy
        log_shift_decades: Exponents k for the log policy
        snr_db_list: Jitter levels in dB; null means no jitter
        trials: Trials per cell
        seed: Base seed
        window: (t_start, t_end) in seconds
        encode_margin: Spikes are generated over the window widened by this
            much on each side, so the window edges stay constrained
        grid_points: Evaluation grid size
        kappa, delta: Machine constants
        bias_margin: b = c + bias_margin
        decoder: One of closed_form, iterative, midpoint_closed_form
        max_iter, tol: Iterative decoder settings
        encode_mode: 'analytic' or 'discrete'
        figures: Pivot tables to write
    """

    name: str = 'sweep'
    omega_list: List[float] = field(default_factory=lambda: [0.5 * np.pi])
    omega_relative: bool = False
    m_list: List[int] = field(default_factory=lambda: [1])
    shift_policy: str = 'equal'
    shift_fractions: List[float] = field(default_factory=list)
    log_shift_decades: List[int] = field(default_factory=list)
    snr_db_list: List[Optional[float]] = field(default_factory=lambda: [None])
    trials: int = 20
    seed: int = 1
    window: Tuple[float, float] = (0.0, 10.0)
    encode_margin: float = 2.0
    grid_points: int = DEFAULT_GRID_POINTS
    kappa: float = 1.0
    delta: float = 1.0
    bias_margin: float = 1.0
    decoder: str = 'closed_form'
    max_iter: int = DEFAULT_MAX_ITER
    tol: float = DEFAULT_TOL
    encode_mode: str = 'analytic'
    figures: List[str] = field(default_factory=lambda: list(ALL_FIGURES))

    @classmethod
    def from_dict(cls, payload: Dict) -> 'SweepSpec':
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise DataError(f"unknown sweep keys: {', '.join(unknown)}")
        spec = cls(**payload)
        spec.window = tuple(float(t) for t in spec.window)
        spec.validate()
        return spec

    @classmethod
    def from_json(cls, path: Union[str, Path], overrides: Optional[Dict] = None) -> 'SweepSpec':
        """Load a JSON spec; non-None overrides replace file values."""
        path = Path(path)
        if not path.exists():
            raise DataError(f"sweep file not found: {path}")
        try:
            with open(path) as f:
                payload = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"malformed sweep file {path}: {e}") from e
        if not isinstance(payload, dict):
            raise DataError(f"sweep file {path} must hold a JSON object")
        payload.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(payload)

    def to_dict(self) -> Dict:
        payload = asdict(self)
        payload['window'] = list(self.window)
        return payload

    def validate(self) -> None:
        problems = []
        if self.trials < 1:
            problems.append("trials must be >= 1")
        for name in ('omega_list', 'm_list', 'snr_db_list', 'figures'):
            if not getattr(self, name):
                problems.append(f"{name} must be non-empty")
        if any(not (np.isfinite(w) and w > 0) for w in self.omega_list):
            problems.append("omega values must be positive")
        if any(int(m) != m or m < 1 for m in self.m_list):
            problems.append("channel counts must be integers >= 1")
        if self.shift_policy not in SHIFT_POLICIES:
            problems.append(f"shift_policy must be one of {', '.join(SHIFT_POLICIES)}")
        if self.shift_policy == 'explicit':
            if not self.shift_fractions:
                problems.append("explicit shift policy needs shift_fractions")
            if any(not 0 < f < 2 for f in self.shift_fractions):
                problems.append("shift fractions must lie in (0, 2)")
        if self.shift_policy == 'log' and not self.log_shift_decades:
            problems.append("log shift policy needs log_shift_decades")
        if any(s is not None and not np.isfinite(s) for s in self.snr_db_list):
            problems.append("snr values must be finite or null")
        if self.decoder not in METHODS:
            problems.append(f"decoder must be one of {', '.join(METHODS)}")
        if self.encode_mode not in ('analytic', 'discrete'):
            problems.append("encode_mode must be 'analytic' or 'discrete'")
        if not self.window[1] > self.window[0]:
            problems.append("window must have t_end > t_start")
        if not (np.isfinite(self.encode_margin) and self.encode_margin >= 0):
            problems.append("encode_margin must be >= 0")
        if self.grid_points < 2:
            problems.append("grid_points must be >= 2")
        if min(self.kappa, self.delta, self.bias_margin) <= 0:
            problems.append("kappa, delta and bias_margin must be positive")
        unknown_figures = sorted(set(self.figures) - set(ALL_FIGURES))
        if unknown_figures:
            problems.append(f"unknown figures: {', '.join(unknown_figures)}")
        if problems:
            raise DataError("invalid sweep spec: " + "; ".join(problems))

    def shift_configs(self) -> List[Tuple[str, Optional[float]]]:
        """(label, alpha_1 / delta) per shift configuration; None means equal spacing."""
        if self.shift_policy == 'equal':
            return [('equal', None)]
        if self.shift_policy == 'explicit':
            return [(f"a1={f:g}", float(f)) for f in self.shift_fractions]
        return [(f"a1=1e-{k}", 10.0 ** (-k)) for k in self.log_shift_decades]

    def bandwidth_bound(self, m: int) -> float:
        """M pi (b - c) / (2 kappa delta) with b - c = bias_margin."""
        return m * np.pi * self.bias_margin / (2 * self.kappa * self.delta)

    def cells(self) -> List['SweepCell']:
        """Cells in omega-major order, then m, shift, snr."""
        cells = []
        for omega in self.omega_list:
            for m in self.m_list:
                bound = self.bandwidth_bound(int(m))
                absolute = omega * bound if self.omega_relative else omega
                for label, fraction in self.shift_configs():
                    for snr in self.snr_db_list:
                        cells.append(SweepCell(
                            index=len(cells),
                            omega=float(absolute),
                            omega_over_bound=float(absolute / bound),
                            m=int(m),
                            shift_config='single' if m == 1 else label,
                            shift_fraction=self._alpha1_fraction(int(m), fraction),
                            snr_db=float('inf') if snr is None else float(snr),
                        ))
        return cells

    def _alpha1_fraction(self, m: int, fraction: Optional[float]) -> float:
        if m == 1:
            return float('nan')
        return 2.0 / m if fraction is None else fraction

    @property
    def encode_window(self) -> Tuple[float, float]:
        return (self.window[0] - self.encode_margin, self.window[1] + self.encode_margin)

    @property
    def n_trials(self) -> int:
        return len(self.cells()) * self.trials


@dataclass(frozen=True)
class SweepCell:
    index: int
    omega: float
    omega_over_bound: float
    m: int
    shift_config: str
    shift_fraction: float
    snr_db: float


@dataclass
class TrialRecord:
    """Outcome of one trial; metrics are NaN when the trial failed."""

    cell_index: int
    trial: int
    omega: float
    omega_over_bound: float
    m: int
    shift_config: str
    shift_fraction: float
    snr_db: float
    seed_used: int
    signal_bound: float = np.nan
    n_spikes: int = 0
    combined_rate: float = np.nan
    rate_ok: bool = False
    interleaved: bool = False
    mse_mid90: float = np.nan
    iterations: int = 0
    final_residual: float = np.nan
    converged: bool = False
    condition_number: float = np.nan
    rank: int = 0
    n_warnings: int = 0
    status: str = 'ok'
    runtime_ms: float = np.nan


# =============================================================================
# TRIALS
# =============================================================================

def trial_seeds(base_seed: int, cell_index: int, trial: int) -> Tuple[int, int]:
    """(signal seed, jitter seed) derived from (base seed, cell, trial) only."""
    state = np.random.SeedSequence([base_seed, cell_index, trial]).generate_state(2)
    return int(state[0]), int(state[1])


def channel_config(spec: SweepSpec, cell: SweepCell, params: TemParams) -> MultiChannelConfig:
    if cell.m == 1:
        return MultiChannelConfig.single(params)
    if spec.shift_policy == 'equal':
        return MultiChannelConfig.equal(params, cell.m)
    alpha1 = cell.shift_fraction * params.delta
    rest = (2 * params.delta - alpha1) / (cell.m - 1)
    return MultiChannelConfig.from_shifts(params, [alpha1] + [rest] * (cell.m - 1))


def run_trial(spec: SweepSpec, cell: SweepCell, trial: int) -> TrialRecord:
    """Encode, jitter, decode and score one random signal. Never raises."""
    signal_seed, jitter_seed = trial_seeds(spec.seed, cell.index, trial)
    record = TrialRecord(
        cell_index=cell.index, trial=trial, omega=cell.omega,
        omega_over_bound=cell.omega_over_bound, m=cell.m,
        shift_config=cell.shift_config, shift_fraction=cell.shift_fraction,
        snr_db=cell.snr_db, seed_used=signal_seed,
    )
    started = time.perf_counter()

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always')
        try:
            signal = generate_random_signal(cell.omega, spec.window, seed=signal_seed,
                                            n_points=spec.grid_points)
            c = estimate_bound(signal, n_points=spec.grid_points, window=spec.encode_window)
            params = TemParams(spec.kappa, spec.delta, c + spec.bias_margin)
            multi = encode_multi(signal, channel_config(spec, cell, params), c=c,
                                 mode=spec.encode_mode, window=spec.encode_window)
            report = diagnostics(multi, c)
            noisy = add_time_jitter(multi, cell.snr_db, seed=jitter_seed)

            grid = make_grid(spec.window, spec.grid_points)
            result = decode(noisy, cell.omega, grid, method=spec.decoder,
                            max_iter=spec.max_iter, tol=spec.tol)

            record.signal_bound = c
            record.n_spikes = multi.n_spikes
            record.combined_rate = report.combined_rate
            record.rate_ok = report.rate_ok
            record.interleaved = check_interleaving(multi)
            record.mse_mid90 = mse_mid90(result.estimate, signal.to_grid(spec.grid_points))
            record.iterations = result.iterations
            record.final_residual = result.final_residual
            record.converged = result.converged
            if result.condition_number is not None:
                record.condition_number = result.condition_number
                record.rank = result.rank
        except Exception as e:
            record.status = f"error: {type(e).__name__}: {e}"
        record.n_warnings = len(caught)

    record.runtime_ms = 1000 * (time.perf_counter() - started)
    return record


def _run_task(task: Tuple[SweepSpec, SweepCell, int]) -> TrialRecord:
    return run_trial(*task)


def worker_count() -> int:
    """Worker processes allowed by TEMCODEC_THREADS (default: CPU count)."""
    raw = os.environ.get(THREADS_ENV, '').strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        count = int(raw)
    except ValueError:
        raise DataError(f"{THREADS_ENV} must be a positive integer, got '{raw}'")
    if count < 1:
        raise DataError(f"{THREADS_ENV} must be a positive integer, got '{raw}'")
    return count


# =============================================================================
# SWEEP
# =============================================================================

def run_sweep(spec: SweepSpec, threads: Optional[int] = None,
              verbose: bool = True) -> pd.DataFrame:
    """
    Run every (cell, trial) of a sweep.

    Trials are independent, so they may run in any order on any worker;
    the returned table is sorted by (cell_index, trial).

    Returns:
        DataFrame with one row per TrialRecord (runtime_ms included)
    """
    spec.validate()
    threads = worker_count() if threads is None else threads
    tasks = [(spec, cell, trial) for cell in spec.cells() for trial in range(spec.trials)]

    if verbose:
        print(f"Sweep '{spec.name}': {len(tasks) // spec.trials} cells x {spec.trials} trials "
              f"({spec.decoder}, {threads} worker(s))")

    progress = tqdm(total=len(tasks), desc=spec.name, unit='trial', disable=not verbose)
    records = []
    if threads == 1:
        for task in tasks:
            records.append(_run_task(task))
            progress.update()
    else:
        chunk = max(1, len(tasks) // (4 * threads))
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for record in pool.map(_run_task, tasks, chunksize=chunk):
                records.append(record)
                progress.update()
    progress.close()

    df = pd.DataFrame([asdict(r) for r in records])
    df = df.sort_values(['cell_index', 'trial'], kind='mergesort').reset_index(drop=True)

    if verbose:
        failures = int((df['status'] != 'ok').sum())
        mark = '✓' if failures == 0 else '✗'
        print(f"  {mark} {len(df)} trials, {failures} failure(s)")
    return df


def save_sweep(trials: pd.DataFrame, spec: SweepSpec, out_dir: Union[str, Path],
               verbose: bool = True) -> Dict[str, Path]:
    """Write trial tables, aggregates, figure pivots and the effective spec."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}

    trials_csv = out_dir / 'trials.csv'
    trials[TRIAL_COLUMNS].to_csv(trials_csv, index=False, float_format=TABLE_FLOAT_FORMAT,
                                 lineterminator='\n')
    trials.to_parquet(out_dir / 'trials.parquet', index=False)
    written['trials'] = trials_csv
    written['trials_parquet'] = out_dir / 'trials.parquet'
    if verbose:
        print(f"  ✓ trials: {len(trials)} rows")

    written.update(save_tables(trials, out_dir, spec.figures, verbose=verbose))

    spec_path = out_dir / 'sweep_spec.json'
    with open(spec_path, 'w') as f:
        json.dump(spec.to_dict(), f, indent=2)
        f.write('\n')
    written['spec'] = spec_path

    failures = int((trials['status'] != 'ok').sum())
    log_sweep(out_dir, spec.name, trials['cell_index'].nunique(), len(trials), failures)
    return written


def log_sweep(out_dir: Path, name: str, cells: int, trials: int, failures: int) -> None:
    """Append one line of run statistics."""
    timestamp = datetime.now().strftime('%Y-%m-%d %H:%M:%S')
    log_entry = f"{timestamp} | Sweep: {name} | Cells: {cells} | Trials: {trials} | Failures: {failures}\n"
    with open(Path(out_dir) / LOG_FILE_NAME, 'a') as f:
        f.write(log_entry)


# =============================================================================
# CLI
# =============================================================================

def add_sweep_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('spec', type=str, help='Sweep JSON file')
    parser.add_argument('--out', type=str, required=True, help='Output directory')
    parser.add_argument('--trials', type=int, default=None, help='Override trials per cell')
    parser.add_argument('--seed', type=int, default=None, help='Override base seed')
    parser.add_argument('--decoder', type=str, default=None, choices=METHODS, help='Override decoder')
    parser.add_argument('--grid-points', type=int, default=None, help='Override grid size')
    parser.add_argument('--threads', type=int, default=None,
                        help=f'Worker processes (default: ${THREADS_ENV} or CPU count)')
    parser.add_argument('--quiet', action='store_true', help='No progress output')


def sweep_from_args(args: argparse.Namespace) -> int:
    overrides = {
        'trials': args.trials,
        'seed': args.seed,
        'decoder': args.decoder,
        'grid_points': args.grid_points,
    }
    spec = SweepSpec.from_json(args.spec, overrides)
    verbose = not args.quiet

    if verbose:
        print("=" * 70)
        print(f"TEM CODEC SWEEP - {spec.name}")
        print("=" * 70)
        print(f"Run Time: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")

    trials = run_sweep(spec, threads=args.threads, verbose=verbose)
    save_sweep(trials, spec, args.out, verbose=verbose)

    if verbose:
        print(f"\nOutput files in {args.out}")
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description='Run a TEM codec parameter sweep')
    add_sweep_arguments(parser)
    raise SystemExit(sweep_from_args(parser.parse_args()))
