"""
TEM Codec - File Formats
========================
Centralized save/load functions for every artifact the codec reads or writes.

Used by: temcodec.py, sweep.py, selftest.py

Formats:
- Signal (JSON):      {"omega", "t_start", "t_end", "centers", "coeffs"}
                      or {"value", "t_start", "t_end"} for a constant input
- Spikes (CSV):       header "channel,time", rows sorted by time, 15 significant digits
- Spike metadata:     JSON sidecar <spikes>.json with params, shifts, seed, snr_db, tool version
- Estimate (CSV):     header "t,value"
- Decode result:      JSON with iterations, residuals, condition number, errors vs truth
"""

import json
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from encoder import MultiChannelConfig, MultiSpikeTrain, SpikeTrain, TemParams
from errors import DataError
from signals import BandlimitedSignal, ConstantSignal, GridSignal, Signal

TOOL_VERSION = "1.0.0"

SPIKE_FLOAT_FORMAT = '%.15g'
ESTIMATE_FLOAT_FORMAT = '%.15g'

SIGNAL_KEYS = ('omega', 't_start', 't_end', 'centers', 'coeffs')


def metadata_path(spikes_path: Union[str, Path]) -> Path:
    """Sidecar path: spikes.csv -> spikes.json."""
    return Path(spikes_path).with_suffix('.json')


def _read_json(path: Path, what: str) -> Dict:
    if not path.exists():
        raise DataError(f"{what} file not found: {path}")
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"malformed {what} file {path}: {e}") from e


def _write_json(payload: Dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write('\n')


# =============================================================================
# SIGNALS
# =============================================================================

def save_signal(signal: Signal, path: Union[str, Path],
                seed: Optional[int] = None, verbose: bool = False) -> Path:
    """
    Write a signal as JSON. Floats are written with repr precision so the
    file round-trips bit-exactly.
    """
    path = Path(path)
    t_start, t_end = signal.window
    if isinstance(signal, ConstantSignal):
        payload = {'value': float(signal.value), 't_start': t_start, 't_end': t_end}
    else:
        payload = {
            'omega': float(signal.omega),
            't_start': t_start,
            't_end': t_end,
            'centers': signal.centers.tolist(),
            'coeffs': signal.coeffs.tolist(),
        }
    if seed is not None:
        payload['seed'] = int(seed)
    payload['tool_version'] = TOOL_VERSION
    _write_json(payload, path)

    if verbose:
        print(f"  ✓ Saved signal to {path}")
    return path


def load_signal(path: Union[str, Path], verbose: bool = False) -> Signal:
    """
    Load a BandlimitedSignal (or ConstantSignal) from JSON.

    Raises:
        DataError: missing file, malformed JSON or missing keys
    """
    path = Path(path)
    payload = _read_json(path, "signal")
    try:
        window = (payload['t_start'], payload['t_end'])
        if 'value' in payload:
            signal = ConstantSignal(value=payload['value'], window=window)
        else:
            missing = [k for k in SIGNAL_KEYS if k not in payload]
            if missing:
                raise DataError(f"signal file {path} is missing keys: {', '.join(missing)}")
            signal = BandlimitedSignal(
                omega=payload['omega'],
                centers=np.asarray(payload['centers'], dtype=float),
                coeffs=np.asarray(payload['coeffs'], dtype=float),
                window=window,
            )
    except KeyError as e:
        raise DataError(f"signal file {path} is missing key {e}") from e
    except (TypeError, ValueError) as e:
        if isinstance(e, DataError):
            raise
        raise DataError(f"invalid signal in {path}: {e}") from e

    if verbose:
        print(f"  ✓ Loaded signal from {path}")
    return signal


# =============================================================================
# SPIKE STREAMS
# =============================================================================

def save_spikes(train: Union[SpikeTrain, MultiSpikeTrain],
                path: Union[str, Path],
                seed: Optional[int] = None,
                verbose: bool = False) -> Tuple[Path, Path]:
    """
    Write a spike stream as CSV plus its JSON metadata sidecar.

    Returns:
        (csv path, metadata path)
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    if isinstance(train, MultiSpikeTrain):
        df = pd.DataFrame({'channel': train.channels, 'time': train.times})
        config = train.config
    else:
        df = pd.DataFrame({'channel': np.zeros(train.n_spikes, dtype=int), 'time': train.times})
        config = MultiChannelConfig.single(train.params, train.y0)
    df.to_csv(path, index=False, float_format=SPIKE_FLOAT_FORMAT, lineterminator='\n')

    meta = {
        'params': config.params.to_dict(),
        'shifts': list(config.shifts),
        'initial_values': list(config.initial_values),
        't_start': train.window[0],
        't_end': train.window[1],
        'seed': seed,
        'snr_db': train.metadata.get('snr_db'),
        'jitter_sigma': train.metadata.get('jitter_sigma'),
        'reordered': train.metadata.get('reordered'),
        'mode': train.metadata.get('mode'),
        'tool_version': TOOL_VERSION,
    }
    meta_path = metadata_path(path)
    _write_json(meta, meta_path)

    if verbose:
        print(f"  ✓ Saved {len(df)} spikes to {path}")
    return path, meta_path


def load_spikes(path: Union[str, Path], verbose: bool = False) -> MultiSpikeTrain:
    """
    Load a spike stream and its metadata sidecar.

    Raises:
        DataError: missing metadata (params are needed to form the interval
            integrals), malformed CSV or inconsistent channels
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"spike file not found: {path}")
    meta_file = metadata_path(path)
    if not meta_file.exists():
        raise DataError(f"missing metadata for {path}: expected {meta_file}")
    meta = _read_json(meta_file, "spike metadata")

    try:
        df = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"malformed spike file {path}: {e}") from e
    if list(df.columns) != ['channel', 'time']:
        raise DataError(f"spike file {path} must have header 'channel,time', got {list(df.columns)}")

    try:
        params = TemParams(**meta['params'])
        config = MultiChannelConfig(
            params=params,
            shifts=tuple(meta.get('shifts', ())),
            initial_values=tuple(meta['initial_values']),
        )
        metadata = {k: meta[k] for k in ('seed', 'snr_db', 'jitter_sigma', 'reordered', 'mode')
                    if meta.get(k) is not None}
        train = MultiSpikeTrain(
            times=df['time'].to_numpy(dtype=float),
            channels=df['channel'].to_numpy(dtype=int),
            config=config,
            window=(float(meta['t_start']), float(meta['t_end'])),
            metadata=metadata,
        )
    except KeyError as e:
        raise DataError(f"spike metadata {meta_file} is missing key {e}") from e
    except (TypeError, ValueError) as e:
        raise DataError(f"invalid spike stream {path}: {e}") from e

    if verbose:
        print(f"  ✓ Loaded {train.n_spikes} spikes ({train.n_channels} channel(s)) from {path}")
    return train


# =============================================================================
# ESTIMATES AND RESULTS
# =============================================================================

def save_estimate(estimate: GridSignal, path: Union[str, Path], verbose: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame({'t': estimate.times, 'value': estimate.values})
    df.to_csv(path, index=False, float_format=ESTIMATE_FLOAT_FORMAT, lineterminator='\n')
    if verbose:
        print(f"  ✓ Saved estimate ({estimate.n} points) to {path}")
    return path


def load_estimate(path: Union[str, Path]) -> GridSignal:
    """Read a "t,value" CSV back into a GridSignal (uniform grid assumed)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"estimate file not found: {path}")
    df = pd.read_csv(path)
    if list(df.columns) != ['t', 'value'] or len(df) < 2:
        raise DataError(f"estimate file {path} must have header 't,value' and >= 2 rows")
    t = df['t'].to_numpy(dtype=float)
    dt = (t[-1] - t[0]) / (len(t) - 1)
    return GridSignal(t0=float(t[0]), dt=float(dt), values=df['value'].to_numpy(dtype=float))


def save_result(result: Dict, path: Union[str, Path], verbose: bool = False) -> Path:
    path = Path(path)
    payload = dict(result)
    payload['tool_version'] = TOOL_VERSION
    _write_json(payload, path)
    if verbose:
        print(f"  ✓ Saved result to {path}")
    return path


def load_result(path: Union[str, Path]) -> Dict:
    return _read_json(Path(path), "result")
