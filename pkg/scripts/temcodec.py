"""
TEM Codec - Command Line
========================
Encode signals into spike streams, decode them back and run experiment sweeps.

Usage:
    python temcodec.py generate --omega 1.5708 --seed 7 --out data/signal.json
    python temcodec.py encode data/signal.json --channels 2 --margin 2 --out data/spikes.csv
    python temcodec.py decode data/spikes.csv --omega 1.5708 --truth data/signal.json --out data/estimate.csv
    python temcodec.py sweep data/sweeps/fig8.json --out results/fig8
    python temcodec.py selftest --quick

Exit codes:
    0  success
    1  usage error
    2  data error (missing or malformed files, invalid parameters)
    3  numerical failure (or failing selftest)
"""

import argparse
import sys
import warnings
from pathlib import Path
from typing import List, Optional

import numpy as np

from data_loader import load_signal, load_spikes, save_estimate, save_result, save_signal, save_spikes
from decoder import DEFAULT_MAX_ITER, DEFAULT_TOL, METHODS, decode
from encoder import MultiChannelConfig, TemParams, add_time_jitter, diagnostics, encode_multi
from errors import DataError, NumericalError
from metrics import error_summary
from selftest import add_selftest_arguments, selftest_from_args
from signals import (DEFAULT_GRID_POINTS, ConstantSignal, estimate_bound, generate_random_signal,
                     make_grid)
from sweep import add_sweep_arguments, sweep_from_args

# ============================================================================
# CONFIGURATION
# ============================================================================

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

DEFAULT_WINDOW = (0.0, 10.0)


class CodecArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that exits with status 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ============================================================================
# SUBCOMMANDS
# ============================================================================

def cmd_generate(args: argparse.Namespace) -> int:
    window = (args.t_start, args.t_end)
    if args.constant is not None:
        signal = ConstantSignal(args.constant, window)
        print(f"Constant signal x = {args.constant:g} on [{window[0]:g}, {window[1]:g}]")
    else:
        if args.omega is None:
            raise DataError("--omega is required unless --constant is given")
        signal = generate_random_signal(args.omega, window, seed=args.seed, n_points=args.grid_points)
        print(f"Random signal: omega={args.omega:.6g}, {signal.centers.size} centers, seed={args.seed}")
    save_signal(signal, args.out, seed=args.seed, verbose=True)
    return EXIT_OK


def _channel_config(args: argparse.Namespace, params: TemParams) -> MultiChannelConfig:
    if args.shifts:
        return MultiChannelConfig.from_shifts(params, args.shifts, y1=args.y1)
    return MultiChannelConfig.equal(params, args.channels, y1=args.y1)


def cmd_encode(args: argparse.Namespace) -> int:
    signal = load_signal(args.signal, verbose=True)
    if args.margin < 0:
        raise DataError("--margin must be >= 0")
    window = (signal.window[0] - args.margin, signal.window[1] + args.margin)
    c = estimate_bound(signal, window=window) if args.bound is None else args.bound
    bias = c + args.bias_margin if args.bias is None else args.bias
    params = TemParams(kappa=args.kappa, delta=args.delta, bias=bias)
    config = _channel_config(args, params)

    multi = encode_multi(signal, config, c=c, mode=args.mode, window=window)
    report = diagnostics(multi, c)
    train = add_time_jitter(multi, args.snr_db, seed=args.seed)
    save_spikes(train, args.out, seed=args.seed, verbose=True)

    print(f"\nSpikes: {train.n_spikes} over {train.n_channels} channel(s)")
    print(f"  kappa={params.kappa:g}, delta={params.delta:g}, b={params.bias:.6g}, c={c:.6g}")
    rates = ', '.join(f"{r:.4f}" for r in report.channel_rates)
    mark = '✓' if report.rate_ok else '✗'
    print(f"  {mark} rate {report.combined_rate:.4f}/s (bound {report.rate_bound:.4f}/s; per channel: {rates})")
    if report.separation_bound is not None:
        mark = '✓' if report.separation_ok else '✗'
        print(f"  {mark} min gap {report.min_gap:.4g} s (separation bound {report.separation_bound:.4g} s)")
    print(f"  Bandwidth bound: {params.bandwidth_bound(c, config.n_channels):.6g} rad/s")
    if 'snr_db' in train.metadata:
        print(f"  Jitter: {train.metadata['snr_db']:g} dB (sigma={train.metadata['jitter_sigma']:.3g} s)")
    return EXIT_OK


def cmd_decode(args: argparse.Namespace) -> int:
    train = load_spikes(args.spikes, verbose=True)
    signal = load_signal(args.truth, verbose=True) if args.truth else None

    # Output window: explicit, else the truth signal's, else the spike stream's
    window = train.window if signal is None else signal.window
    window = (window[0] if args.t_start is None else args.t_start,
              window[1] if args.t_end is None else args.t_end)
    grid = make_grid(window, args.grid_points)
    result = decode(train, args.omega, grid, method=args.method,
                    max_iter=args.max_iter, tol=args.tol)

    truth = None if signal is None else grid.with_values(signal.eval(grid.times))

    save_estimate(result.estimate, args.out, verbose=True)
    payload = result.to_dict()
    payload.update(error_summary(result.estimate, truth))
    payload.update({'omega': args.omega, 'grid_points': args.grid_points, 'spikes': str(args.spikes)})
    result_path = Path(args.result) if args.result else Path(args.out).with_suffix('.json')
    save_result(payload, result_path, verbose=True)

    print(f"\nDecoded with {result.method}: final residual {result.final_residual:.3e}")
    if result.method == 'iterative':
        mark = '✓' if result.converged else '✗'
        print(f"  {mark} {result.iterations} iterations (tol {args.tol:g})")
    else:
        print(f"  rank {result.rank}, condition number {result.condition_number:.3e}")
    if result.diagnostic:
        print(f"  Diagnostic: {result.diagnostic}")
    if truth is not None:
        print(f"  mse_mid90 = {payload['mse_mid90']:.6e}")
    return EXIT_OK


# ============================================================================
# PARSER
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = CodecArgumentParser(description='Multi-channel time encoding codec')
    sub = parser.add_subparsers(dest='command', required=True, parser_class=CodecArgumentParser)

    gen = sub.add_parser('generate', help='Write a random bandlimited signal')
    gen.add_argument('--omega', type=float, default=None, help='Bandwidth (rad/s)')
    gen.add_argument('--constant', type=float, default=None, help='Write a constant signal instead')
    gen.add_argument('--t-start', type=float, default=DEFAULT_WINDOW[0])
    gen.add_argument('--t-end', type=float, default=DEFAULT_WINDOW[1])
    gen.add_argument('--seed', type=int, default=None)
    gen.add_argument('--grid-points', type=int, default=DEFAULT_GRID_POINTS)
    gen.add_argument('--out', type=str, required=True)
    gen.set_defaults(func=cmd_generate)

    enc = sub.add_parser('encode', help='Encode a signal file into spikes')
    enc.add_argument('signal', type=str, help='Signal JSON')
    enc.add_argument('--kappa', type=float, default=1.0)
    enc.add_argument('--delta', type=float, default=1.0)
    enc.add_argument('--bias', type=float, default=None, help='Bias b (default: c + bias margin)')
    enc.add_argument('--bias-margin', type=float, default=1.0)
    enc.add_argument('--bound', type=float, default=None, help='Signal bound c (default: estimated)')
    enc.add_argument('--channels', type=int, default=1, help='Equally shifted channels')
    enc.add_argument('--shifts', type=float, nargs='+', default=None,
                     help='Integrator shifts (M-1 or M values; overrides --channels)')
    enc.add_argument('--y1', type=float, default=None, help='First integrator start value (default -delta)')
    enc.add_argument('--snr-db', type=float, default=None, help='Add timing jitter at this SNR')
    enc.add_argument('--seed', type=int, default=None, help='Jitter seed')
    enc.add_argument('--margin', type=float, default=0.0,
                     help='Encode this many seconds past each end of the signal window')
    enc.add_argument('--mode', choices=['analytic', 'discrete'], default='analytic')
    enc.add_argument('--out', type=str, required=True, help='Spike CSV (metadata goes next to it)')
    enc.set_defaults(func=cmd_encode)

    dec = sub.add_parser('decode', help='Reconstruct a signal from spikes')
    dec.add_argument('spikes', type=str, help='Spike CSV with metadata sidecar')
    dec.add_argument('--omega', type=float, required=True, help='Bandwidth (rad/s)')
    dec.add_argument('--grid-points', type=int, default=DEFAULT_GRID_POINTS)
    dec.add_argument('--method', choices=METHODS, default='closed_form')
    dec.add_argument('--max-iter', type=int, default=DEFAULT_MAX_ITER)
    dec.add_argument('--tol', type=float, default=DEFAULT_TOL)
    dec.add_argument('--t-start', type=float, default=None, help='Output window start')
    dec.add_argument('--t-end', type=float, default=None, help='Output window end')
    dec.add_argument('--truth', type=str, default=None, help='Signal JSON to score against')
    dec.add_argument('--out', type=str, required=True, help='Estimate CSV')
    dec.add_argument('--result', type=str, default=None, help='Result JSON (default: next to --out)')
    dec.set_defaults(func=cmd_decode)

    swp = sub.add_parser('sweep', help='Run a parameter sweep')
    add_sweep_arguments(swp)
    swp.set_defaults(func=sweep_from_args)

    chk = sub.add_parser('selftest', help='Run the invariant suites')
    add_selftest_arguments(chk)
    chk.set_defaults(func=selftest_from_args)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run a subcommand and map failures onto exit codes."""
    args = build_parser().parse_args(argv)
    warnings.simplefilter('default', RuntimeWarning)
    try:
        return args.func(args)
    except (NumericalError, np.linalg.LinAlgError) as e:
        print(f"✗ Numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, ValueError, OSError) as e:
        print(f"✗ {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
