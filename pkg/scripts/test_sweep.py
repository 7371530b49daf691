"""Tests for sweep.py: configuration, seeding, trials and output files."""

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from encoder import TemParams
from errors import DataError
from figures import bandwidth_transition, noise_ordering, shift_conditioning
from sweep import (LOG_FILE_NAME, THREADS_ENV, TRIAL_COLUMNS, SweepSpec, channel_config, run_sweep,
                   run_trial, save_sweep, trial_seeds, worker_count)


def small_spec(**overrides):
    payload = {
        'name': 'unit',
        'omega_list': [0.5],
        'omega_relative': True,
        'm_list': [1, 2],
        'shift_policy': 'explicit',
        'shift_fractions': [0.5, 1.0],
        'snr_db_list': [None, 30.0],
        'trials': 2,
        'seed': 5,
        'grid_points': 300,
    }
    payload.update(overrides)
    return SweepSpec.from_dict(payload)


# =============================================================================
# SWEEP SPEC
# =============================================================================

def test_unknown_keys_rejected():
    with pytest.raises(DataError, match="unknown sweep keys: bogus"):
        SweepSpec.from_dict({'bogus': 1})


@pytest.mark.parametrize('overrides, message', [
    ({'trials': 0}, 'trials'),
    ({'m_list': []}, 'm_list'),
    ({'shift_fractions': []}, 'shift_fractions'),
    ({'decoder': 'fourier'}, 'decoder'),
    ({'encode_margin': -1.0}, 'encode_margin'),
    ({'figures': ['fig99']}, 'fig99'),
])
def test_invalid_specs(overrides, message):
    with pytest.raises(DataError, match=message):
        small_spec(**overrides)


def test_from_json_with_overrides(tmp_path):
    path = tmp_path / 'sweep.json'
    path.write_text(json.dumps({'name': 'file', 'trials': 7, 'window': [0, 10]}))
    spec = SweepSpec.from_json(path, {'trials': 3, 'seed': None})
    assert spec.trials == 3
    assert spec.seed == 1
    assert spec.window == (0.0, 10.0)
    with pytest.raises(DataError, match="not found"):
        SweepSpec.from_json(tmp_path / 'absent.json')


def test_fig8_sweep_spans_four_times_the_bound():
    spec = SweepSpec.from_json(Path(__file__).resolve().parent.parent / 'data' / 'sweeps' / 'fig8.json')
    omegas = np.asarray(spec.omega_list) / np.pi
    assert not spec.omega_relative
    assert omegas.min() == pytest.approx(0.25)
    assert omegas.max() >= 4 * max(spec.m_list) - 1e-9
    np.testing.assert_allclose(np.diff(omegas), 0.25, atol=1e-12)


def test_spec_round_trips_through_dict():
    spec = small_spec()
    assert SweepSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec


def test_cells_order_and_labels():
    spec = small_spec()
    cells = spec.cells()
    assert len(cells) == 1 * 2 * 2 * 2
    assert spec.n_trials == 16
    assert [c.index for c in cells] == list(range(8))

    single = [c for c in cells if c.m == 1]
    assert {c.shift_config for c in single} == {'single'}
    assert all(np.isnan(c.shift_fraction) for c in single)
    assert single[0].omega == pytest.approx(np.pi / 4)
    assert single[0].omega_over_bound == pytest.approx(0.5)

    pair = [c for c in cells if c.m == 2]
    assert [c.shift_config for c in pair] == ['a1=0.5', 'a1=0.5', 'a1=1', 'a1=1']
    assert [c.snr_db for c in pair] == [float('inf'), 30.0, float('inf'), 30.0]
    assert pair[0].omega == pytest.approx(np.pi / 2)


def test_log_and_equal_shift_configs():
    assert small_spec(shift_policy='log', log_shift_decades=[1, 3]).shift_configs() == [
        ('a1=1e-1', 0.1), ('a1=1e-3', 0.001)]
    assert small_spec(shift_policy='equal').shift_configs() == [('equal', None)]


def test_encode_window():
    spec = small_spec(encode_margin=1.5)
    assert spec.encode_window == (-1.5, 11.5)


# =============================================================================
# TRIALS
# =============================================================================

def test_trial_seeds_are_stable():
    assert trial_seeds(1, 2, 3) == trial_seeds(1, 2, 3)
    assert trial_seeds(1, 2, 3) != trial_seeds(1, 2, 4)
    assert trial_seeds(1, 2, 3) != trial_seeds(1, 3, 3)
    signal_seed, jitter_seed = trial_seeds(1, 0, 0)
    assert signal_seed != jitter_seed


def test_channel_config_explicit_shift():
    spec = small_spec(m_list=[3])
    cell = [c for c in spec.cells() if c.shift_fraction == 0.5][0]
    config = channel_config(spec, cell, TemParams(1.0, 1.0, 2.0))
    assert config.shifts == pytest.approx((0.5, 0.75, 0.75))


def test_run_trial_ok():
    spec = small_spec(m_list=[1], snr_db_list=[None])
    record = run_trial(spec, spec.cells()[0], 0)
    assert record.status == 'ok'
    assert record.n_spikes > 5
    assert record.interleaved
    assert record.rate_ok
    assert 0.0 <= record.mse_mid90 < 0.05
    assert record.runtime_ms > 0


def test_run_trial_records_failures():
    # one sinc center needs pi / omega <= 10 s
    spec = small_spec(omega_list=[0.1], omega_relative=False, m_list=[1], snr_db_list=[None])
    record = run_trial(spec, spec.cells()[0], 0)
    assert record.status.startswith('error: ValueError: window too short')
    assert np.isnan(record.mse_mid90)


def test_worker_count(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, '3')
    assert worker_count() == 3
    monkeypatch.setenv(THREADS_ENV, 'zero')
    with pytest.raises(DataError):
        worker_count()
    monkeypatch.setenv(THREADS_ENV, '0')
    with pytest.raises(DataError):
        worker_count()
    monkeypatch.delenv(THREADS_ENV)
    assert worker_count() >= 1


# =============================================================================
# SWEEPS
# =============================================================================

@pytest.fixture(scope='module')
def sweep_trials():
    return run_sweep(small_spec(), threads=1, verbose=False)


def test_run_sweep_table(sweep_trials):
    assert len(sweep_trials) == 16
    assert list(sweep_trials[['cell_index', 'trial']].itertuples(index=False, name=None)) == [
        (cell, trial) for cell in range(8) for trial in range(2)]
    assert set(TRIAL_COLUMNS) <= set(sweep_trials.columns)
    assert (sweep_trials['status'] == 'ok').all()


def test_run_sweep_is_reproducible(sweep_trials):
    again = run_sweep(small_spec(), threads=1, verbose=False)
    pd.testing.assert_frame_equal(again[TRIAL_COLUMNS], sweep_trials[TRIAL_COLUMNS])


def test_save_sweep(tmp_path, sweep_trials):
    spec = small_spec()
    written = save_sweep(sweep_trials, spec, tmp_path, verbose=False)

    trials_csv = pd.read_csv(written['trials'])
    assert list(trials_csv.columns) == TRIAL_COLUMNS
    assert 'runtime_ms' in pd.read_parquet(written['trials_parquet']).columns

    for name in ('cells', 'fig8', 'fig9', 'fig10', 'fig11a', 'fig11b', 'conditioning'):
        assert written[name].exists()

    saved_spec = json.loads(written['spec'].read_text())
    assert SweepSpec.from_dict(saved_spec) == spec

    log_line = (tmp_path / LOG_FILE_NAME).read_text().strip()
    assert '| Sweep: unit | Cells: 8 | Trials: 16 | Failures: 0' in log_line


def test_saved_trials_are_byte_identical(tmp_path, sweep_trials):
    first, second = tmp_path / 'a', tmp_path / 'b'
    save_sweep(sweep_trials, small_spec(), first, verbose=False)
    save_sweep(run_sweep(small_spec(), threads=1, verbose=False), small_spec(), second, verbose=False)
    assert (first / 'trials.csv').read_bytes() == (second / 'trials.csv').read_bytes()


# =============================================================================
# PHASE BEHAVIOUR
# =============================================================================

def phase_sweep(**overrides):
    payload = {'name': 'phase', 'omega_relative': True, 'trials': 2, 'seed': 7}
    payload.update(overrides)
    return run_sweep(SweepSpec.from_dict(payload), threads=1, verbose=False)


def test_recovery_fails_above_the_bound():
    trials = phase_sweep(omega_list=[0.5, 0.8, 1.5], m_list=[1, 2], shift_policy='equal')
    table = bandwidth_transition(trials)
    assert table['m'].tolist() == [1, 2]
    assert table['passed'].all()


def test_conditioning_grows_as_shift_shrinks():
    # 1.2 times the single-machine bound
    trials = phase_sweep(omega_list=[0.6], m_list=[2], shift_policy='log',
                         log_shift_decades=[1, 2, 3, 4, 5, 6, 7, 8])
    assert (trials['status'] == 'ok').all()
    trend = shift_conditioning(trials)
    assert trend.loc[0, 'n_shifts'] == 8
    assert trend.loc[0, 'spearman_rho'] < -0.9
    assert trend.loc[0, 'worsens_as_shift_shrinks']


def test_error_grows_with_timing_noise():
    trials = phase_sweep(omega_list=[0.8], m_list=[2], shift_policy='equal',
                         snr_db_list=[None, 80.0, 60.0, 40.0, 20.0, 0.0])
    table = noise_ordering(trials)
    assert table.loc[0, 'n_levels'] == 5
    assert table.loc[0, 'passed']
