"""
TEM Codec - Self Test
=====================
Run this locally to check the codec's invariants end to end.

Usage:
    python selftest.py                     # Full-size suites
    python selftest.py --quick             # Reduced sizes
    python selftest.py --suite kernels     # One suite only

Suites:
1. constant     DC inputs give spike spacing 2 kappa delta / (b + value)
2. integrals    recovered interval integrals match the signal primitive,
                gaps obey 2 kappa delta / (b - c), rate and interleaving hold
3. operators    projections are idempotent and nonexpansive, I - 2 B1 is an isometry
4. kernels      analytic kernel integrals match adaptive quadrature,
                the pseudoinverse satisfies the Penrose identities
5. agreement    closed-form and iterative decoders agree within the window
6. phase        reduced sweeps: recovery flips above the bandwidth bound,
                shift configurations decode alike, conditioning worsens as
                the shift shrinks, error grows as timing noise rises
"""

import argparse
import json
import time
import warnings
from datetime import datetime
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from decoder import (ConsistencyConstraint, IntervalMeasurement, decode_closed_form,
                     decode_iterative, indicator_kernel, indicator_kernel_integral,
                     project_bandlimit, project_consistency, sinc_interval_integral, sinc_kernel)
from encoder import (MultiChannelConfig, TemParams, check_interleaving, diagnostics, encode,
                     encode_multi, interval_integrals)
from kernels import grid_norm, pinv_truncated, quad_adaptive
from figures import (NOISE_INVERSIONS, SHIFT_SPREAD, TRANSITION_JUMP, TREND_RHO, bandwidth_transition,
                     noise_ordering, shift_conditioning, shift_independence)
from metrics import grid_l2_distance
from signals import ConstantSignal, GridSignal, estimate_bound, generate_random_signal, make_grid
from sweep import SweepSpec, run_sweep

# ============================================================================
# CONFIGURATION
# ============================================================================

WINDOW = (0.0, 10.0)

# Agreement trials encode past both ends of WINDOW by this much
ENCODE_MARGIN = 2.0
ENCODE_WINDOW = (WINDOW[0] - ENCODE_MARGIN, WINDOW[1] + ENCODE_MARGIN)

# name -> (full size, quick size)
SUITE_SIZES = {
    'constant': (2, 2),
    'integrals': (50, 5),
    'operators': (200, 20),
    'kernels': (500, 50),
    'agreement': (20, 2),
    'phase': (5, 2),
}

SPIKE_TOL = 1e-9
INTEGRAL_TOL = 1e-8
PROJECTION_TOL = 1e-10
ISOMETRY_TOL = 1e-8
KERNEL_TOL = 1e-9
PENROSE_TOL = 1e-8
AGREEMENT_TOL = 1e-3

AGREEMENT_ITERATIONS = 500

# Grid for operator checks
OPERATOR_GRID_POINTS = 400
OPERATOR_OMEGA = 4 * np.pi


def add_check(report: Dict, suite: str, name: str, value: float, limit: float, passed: bool) -> None:
    report['checks'].append({
        'suite': suite,
        'check': name,
        'value': float(value),
        'limit': float(limit),
        'status': 'PASS' if passed else 'FAIL',
    })
    report['passed' if passed else 'failed'] += 1


def _bias_params(c: float) -> TemParams:
    return TemParams(kappa=1.0, delta=1.0, bias=c + 1.0)


# ============================================================================
# SUITES
# ============================================================================

def check_constant_inputs(report: Dict, size: int, rng: np.random.Generator) -> None:
    """x = c0 with kappa = delta = 1, b = 2 gives spacing 2 / (2 + c0)."""
    params = TemParams(kappa=1.0, delta=1.0, bias=2.0)
    for value in (0.0, 1.0)[:max(size, 1)]:
        train = encode(ConstantSignal(value, WINDOW), params, c=abs(value))
        expected = 2 * params.kappa * params.delta / (params.bias + value)
        error = float(np.max(np.abs(np.diff(train.times) - expected)))
        add_check(report, 'constant', f"spacing x={value:g}", error, SPIKE_TOL, error <= SPIKE_TOL)


def check_interval_integrals(report: Dict, size: int, rng: np.random.Generator) -> None:
    """Interval integrals, gap bound, rate bound and interleaving on random signals."""
    worst = {'integral': 0.0, 'gap_excess': -np.inf}
    rate_fail = 0
    interleave_fail = 0
    for _ in range(size):
        signal = generate_random_signal(np.pi, WINDOW, seed=int(rng.integers(2 ** 31)))
        c = estimate_bound(signal)
        params = _bias_params(c)
        for m in (1, 2, 3):
            multi = encode_multi(signal, MultiChannelConfig.equal(params, m), c=c)
            q = interval_integrals(multi)
            exact = signal.primitive(multi.times[m:]) - signal.primitive(multi.times[:-m])
            worst['integral'] = max(worst['integral'], float(np.max(np.abs(q - exact))))
            for ch in range(m):
                gaps = np.diff(multi.channel_times(ch))
                worst['gap_excess'] = max(worst['gap_excess'], float(np.max(gaps) - params.period_bound(c)))
            rate_fail += int(not diagnostics(multi, c).rate_ok)
            if m > 1:
                interleave_fail += int(not check_interleaving(multi))

    add_check(report, 'integrals', 'interval integral error', worst['integral'], INTEGRAL_TOL,
              worst['integral'] <= INTEGRAL_TOL)
    add_check(report, 'integrals', 'max gap - 2 kappa delta / (b - c)', worst['gap_excess'], 0.0,
              worst['gap_excess'] <= 0.0)
    add_check(report, 'integrals', 'rate bound failures', rate_fail, 0, rate_fail == 0)
    add_check(report, 'integrals', 'interleaving failures', interleave_fail, 0, interleave_fail == 0)


def random_constraint(grid: GridSignal, rng: np.random.Generator, channel: int = 0) -> ConsistencyConstraint:
    """Consecutive random intervals inside the grid window, each wider than a few cells."""
    span = grid.t_end - grid.t0
    gaps = rng.uniform(0.03, 0.12, size=40) * span
    edges = grid.t0 + 0.05 * span + np.cumsum(np.concatenate([[0.0], gaps]))
    edges = edges[edges <= grid.t0 + 0.95 * span]
    intervals = np.column_stack([edges[:-1], edges[1:]])
    return ConsistencyConstraint(intervals, rng.normal(size=len(intervals)), channel)


def check_operators(report: Dict, size: int, rng: np.random.Generator) -> None:
    """Idempotence, nonexpansiveness and the I - 2 B1 isometry on random grid signals."""
    grid = make_grid(WINDOW, OPERATOR_GRID_POINTS)
    worst = {'band_idem': 0.0, 'band_expand': -np.inf, 'cons_idem': 0.0,
             'cons_expand': -np.inf, 'isometry': 0.0}

    for _ in range(size):
        constraint = random_constraint(grid, rng)
        measurement = IntervalMeasurement.on_grid(constraint, grid)
        y1 = grid.with_values(rng.normal(size=grid.n))
        y2 = grid.with_values(rng.normal(size=grid.n))
        gap = grid_norm(y1.values - y2.values, grid.dt)

        p1 = project_bandlimit(y1, OPERATOR_OMEGA)
        p2 = project_bandlimit(y2, OPERATOR_OMEGA)
        pp = project_bandlimit(p1, OPERATOR_OMEGA)
        worst['band_idem'] = max(worst['band_idem'], float(np.max(np.abs(pp.values - p1.values))))
        worst['band_expand'] = max(worst['band_expand'], grid_norm(p1.values - p2.values, grid.dt) - gap)

        c1 = project_consistency(y1, constraint)
        c2 = project_consistency(y2, constraint)
        cc = project_consistency(c1, constraint)
        worst['cons_idem'] = max(worst['cons_idem'], float(np.max(np.abs(cc.values - c1.values))))
        worst['cons_expand'] = max(worst['cons_expand'], grid_norm(c1.values - c2.values, grid.dt) - gap)

        reflected = y1.values - 2 * measurement.average(y1.values)
        norm = y1.norm()
        worst['isometry'] = max(worst['isometry'], abs(grid_norm(reflected, grid.dt) - norm) / norm)

    add_check(report, 'operators', 'P_Omega idempotence', worst['band_idem'], PROJECTION_TOL,
              worst['band_idem'] <= PROJECTION_TOL)
    add_check(report, 'operators', 'P_Omega expansion', worst['band_expand'], PROJECTION_TOL,
              worst['band_expand'] <= PROJECTION_TOL)
    add_check(report, 'operators', 'P_A idempotence', worst['cons_idem'], PROJECTION_TOL,
              worst['cons_idem'] <= PROJECTION_TOL)
    add_check(report, 'operators', 'P_A expansion', worst['cons_expand'], PROJECTION_TOL,
              worst['cons_expand'] <= PROJECTION_TOL)
    add_check(report, 'operators', '|I - 2 B1| isometry (relative)', worst['isometry'], ISOMETRY_TOL,
              worst['isometry'] <= ISOMETRY_TOL)


def check_kernels(report: Dict, size: int, rng: np.random.Generator) -> None:
    """Analytic kernel integrals against quadrature; Penrose identities against normal equations."""
    worst_smoothed = 0.0
    worst_midpoint = 0.0
    for _ in range(size):
        omega = rng.uniform(0.25, 4.0) * np.pi
        a, b = np.sort(rng.uniform(0.0, 10.0, 2))
        c, d = np.sort(rng.uniform(0.0, 10.0, 2))
        analytic = float(indicator_kernel_integral(c, d, a, b, omega))
        oracle = quad_adaptive(lambda u: indicator_kernel(u, a, b, omega), c, d, tol=1e-11)
        worst_smoothed = max(worst_smoothed, abs(analytic - oracle))

        s = 0.5 * (a + b)
        analytic = float(sinc_interval_integral(c, d, s, omega))
        oracle = quad_adaptive(lambda u: float(sinc_kernel(u - s, omega)), c, d, tol=1e-11)
        worst_midpoint = max(worst_midpoint, abs(analytic - oracle))

    add_check(report, 'kernels', 'smoothed-indicator entries vs quadrature', worst_smoothed, KERNEL_TOL,
              worst_smoothed <= KERNEL_TOL)
    add_check(report, 'kernels', 'midpoint entries vs quadrature', worst_midpoint, KERNEL_TOL,
              worst_midpoint <= KERNEL_TOL)

    worst_penrose = 0.0
    worst_oracle = 0.0
    for _ in range(max(size // 10, 1)):
        rows, cols = rng.integers(3, 11, size=2)
        a = rng.normal(size=(rows, cols))
        ap = pinv_truncated(a).to_array()
        identities = [a @ ap @ a - a, ap @ a @ ap - ap, (a @ ap).T - a @ ap, (ap @ a).T - ap @ a]
        worst_penrose = max(worst_penrose, max(float(np.max(np.abs(e))) for e in identities))
        oracle = np.linalg.solve(a.T @ a, a.T) if rows >= cols else a.T @ np.linalg.inv(a @ a.T)
        worst_oracle = max(worst_oracle, float(np.max(np.abs(ap - oracle))))

    add_check(report, 'kernels', 'Penrose identities', worst_penrose, PENROSE_TOL, worst_penrose <= PENROSE_TOL)
    add_check(report, 'kernels', 'pinv vs normal equations', worst_oracle, PENROSE_TOL, worst_oracle <= PENROSE_TOL)


def check_agreement(report: Dict, size: int, rng: np.random.Generator) -> None:
    """Closed-form vs 500-iteration POCS at half the bandwidth bound."""
    grid = make_grid(WINDOW)
    for m in (1, 2):
        worst = 0.0
        for _ in range(size):
            omega = 0.5 * m * np.pi / 2
            signal = generate_random_signal(omega, WINDOW, seed=int(rng.integers(2 ** 31)))
            c = estimate_bound(signal, window=ENCODE_WINDOW)
            multi = encode_multi(signal, MultiChannelConfig.equal(_bias_params(c), m), c=c,
                                 window=ENCODE_WINDOW)
            with warnings.catch_warnings():
                warnings.simplefilter('ignore')
                closed = decode_closed_form(multi, omega, grid)
                iterative = decode_iterative(multi, omega, grid, max_iter=AGREEMENT_ITERATIONS)
            worst = max(worst, grid_l2_distance(closed.estimate, iterative.estimate))
        add_check(report, 'agreement', f"closed form vs iterative, M={m}", worst, AGREEMENT_TOL,
                  worst <= AGREEMENT_TOL)


# Reduced sweeps for the phase suite; bandwidths relative to the M-channel bound
PHASE_SWEEPS = {
    'transition': {'omega_list': [0.5, 0.8, 1.5], 'm_list': [1, 2, 3], 'shift_policy': 'equal'},
    'shifts': {'omega_list': [0.8], 'm_list': [2], 'shift_policy': 'explicit',
               'shift_fractions': [0.5, 1.0, 1.5]},
    # 1.2 times the single-machine bound
    'conditioning': {'omega_list': [0.6], 'm_list': [2], 'shift_policy': 'log',
                     'log_shift_decades': [1, 2, 3, 4, 5, 6, 7, 8]},
    'noise': {'omega_list': [0.8], 'm_list': [2], 'shift_policy': 'equal',
              'snr_db_list': [None, 80.0, 60.0, 40.0, 20.0, 0.0]},
}


def _phase_trials(name: str, trials: int, seed: int):
    payload = {'name': f'phase-{name}', 'omega_relative': True, 'trials': trials, 'seed': seed}
    payload.update(PHASE_SWEEPS[name])
    return run_sweep(SweepSpec.from_dict(payload), threads=1, verbose=False)


def check_phase(report: Dict, size: int, rng: np.random.Generator) -> None:
    """Qualitative outcomes of the bandwidth, shift, conditioning and noise sweeps."""
    seed = int(rng.integers(2 ** 31))

    for _, row in bandwidth_transition(_phase_trials('transition', size, seed)).iterrows():
        add_check(report, 'phase', f"MSE jump above the bound, M={row['m']}", row['jump_ratio'],
                  TRANSITION_JUMP, bool(row['passed']))

    for _, row in shift_independence(_phase_trials('shifts', size, seed)).iterrows():
        add_check(report, 'phase', "MSE spread across shift configurations", row['spread'],
                  SHIFT_SPREAD, bool(row['passed']))

    for _, row in shift_conditioning(_phase_trials('conditioning', size, seed)).iterrows():
        add_check(report, 'phase', "conditioning vs shift (Spearman rho)", row['spearman_rho'],
                  -TREND_RHO, bool(row['worsens_as_shift_shrinks']))

    for _, row in noise_ordering(_phase_trials('noise', size, seed)).iterrows():
        add_check(report, 'phase', "MSE inversions as SNR drops", row['inversions'],
                  NOISE_INVERSIONS, bool(row['passed']))


SUITES: Dict[str, Callable[[Dict, int, np.random.Generator], None]] = {
    'constant': check_constant_inputs,
    'integrals': check_interval_integrals,
    'operators': check_operators,
    'kernels': check_kernels,
    'agreement': check_agreement,
    'phase': check_phase,
}


# ============================================================================
# REPORT
# ============================================================================

def run_selftest(suites: Optional[List[str]] = None, quick: bool = False,
                 seed: int = 0, verbose: bool = True) -> Dict:
    """
    Run the invariant suites and collect a validation report.

    Returns:
        dict with timestamp, checks, passed, failed, seconds per suite
    """
    suites = list(SUITES) if suites is None else suites
    unknown = sorted(set(suites) - set(SUITES))
    if unknown:
        raise ValueError(f"unknown suites: {', '.join(unknown)}")

    report = {
        'timestamp': datetime.now().isoformat(),
        'quick': quick,
        'seed': seed,
        'checks': [],
        'passed': 0,
        'failed': 0,
        'seconds': {},
    }
    rng = np.random.default_rng(seed)
    for name in suites:
        size = SUITE_SIZES[name][1 if quick else 0]
        if verbose:
            print(f"\n--- Suite: {name} (size {size}) ---")
        started = time.perf_counter()
        SUITES[name](report, size, rng)
        report['seconds'][name] = round(time.perf_counter() - started, 3)
    return report


def print_validation_report(report: Dict) -> None:
    """Print formatted validation report."""
    print("\n" + "=" * 70)
    print("VALIDATION REPORT")
    print("=" * 70)
    print(f"Timestamp: {report.get('timestamp', 'N/A')}")
    print(f"Passed: {report.get('passed', 0)}")
    print(f"Failed: {report.get('failed', 0)}")

    print("\n--- Check Details ---")
    for check in report.get('checks', []):
        mark = '✓' if check['status'] == 'PASS' else '✗'
        print(f"{mark} {check['suite']} | {check['check']}: {check['value']:.3e} (limit {check['limit']:.1e})")


def save_report(report: Dict, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(report, f, indent=2, default=str)
    print(f"\n✓ Validation report saved to {path}")


def add_selftest_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--suite', action='append', choices=list(SUITES),
                        help='Suite to run (repeatable; default: all)')
    parser.add_argument('--quick', action='store_true', help='Reduced suite sizes')
    parser.add_argument('--seed', type=int, default=0, help='RNG seed')
    parser.add_argument('--report', type=str, default=None, help='Save the report as JSON')


def selftest_from_args(args: argparse.Namespace) -> int:
    """Exit code 0 when every check passes, 3 otherwise."""
    report = run_selftest(args.suite, quick=args.quick, seed=args.seed)
    print_validation_report(report)
    if args.report:
        save_report(report, Path(args.report))
    return 0 if report['failed'] == 0 else 3


# ============================================================================
# CLI ENTRY POINT
# ============================================================================

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description='TEM codec invariant checks')
    add_selftest_arguments(parser)
    raise SystemExit(selftest_from_args(parser.parse_args()))
