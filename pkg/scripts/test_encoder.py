"""Tests for encoder.py: spike generation, shifts, diagnostics and jitter."""

import numpy as np
import pytest

from encoder import (MultiChannelConfig, MultiSpikeTrain, SpikeTrain, TemParams, add_time_jitter,
                     check_interleaving, diagnostics, encode, encode_multi, integrator_trace,
                     interval_integrals, jitter_sigma, wrap_integrator)
from signals import ConstantSignal, estimate_bound, make_grid

WINDOW = (0.0, 10.0)


# =============================================================================
# PARAMETERS AND CONFIGS
# =============================================================================

@pytest.mark.parametrize('kwargs', [
    {'kappa': 0.0, 'delta': 1.0, 'bias': 1.0},
    {'kappa': 1.0, 'delta': -1.0, 'bias': 1.0},
    {'kappa': 1.0, 'delta': 1.0, 'bias': np.nan},
])
def test_params_must_be_positive(kwargs):
    with pytest.raises(ValueError):
        TemParams(**kwargs)


def test_param_bounds(unit_params):
    assert unit_params.period_bound(0.5) == pytest.approx(2 / 1.5)
    assert unit_params.period_bound(2.0) == float('inf')
    assert unit_params.bandwidth_bound(1.0, 3) == pytest.approx(3 * np.pi / 2)


def test_wrap_integrator():
    assert wrap_integrator(1.5, 1.0) == pytest.approx(-0.5)
    assert wrap_integrator(-1.0, 1.0) == pytest.approx(-1.0)
    assert wrap_integrator(1.0, 1.0) == pytest.approx(-1.0)


def test_from_shifts_appends_closing_shift(unit_params):
    config = MultiChannelConfig.from_shifts(unit_params, [0.5])
    assert config.n_channels == 2
    assert config.shifts == pytest.approx((0.5, 1.5))
    assert config.initial_values == pytest.approx((-1.0, -0.5))


def test_equal_shifts(unit_params):
    config = MultiChannelConfig.equal(unit_params, 4)
    assert config.shifts == pytest.approx((0.5,) * 4)
    assert config.initial_values == pytest.approx((-1.0, -0.5, 0.0, 0.5))
    assert MultiChannelConfig.equal(unit_params, 1).shifts == ()


def test_config_validation(unit_params):
    with pytest.raises(ValueError, match="sum"):
        MultiChannelConfig(unit_params, (0.5, 0.7), (-1.0, -0.5))
    with pytest.raises(ValueError):
        MultiChannelConfig(unit_params, (2.5, 1.5), (-1.0, -0.5))
    with pytest.raises(ValueError):
        MultiChannelConfig(unit_params, (), (1.0,))
    with pytest.raises(ValueError):
        MultiChannelConfig(unit_params, (1.0,), (-1.0, 0.0))


# =============================================================================
# ENCODING
# =============================================================================

def test_constant_input_spacing(unit_params):
    train = encode(ConstantSignal(0.5, WINDOW), unit_params, c=0.5)
    # 2 kappa delta / (b + x) = 0.8 s, first spike after a full 2 delta climb
    np.testing.assert_allclose(train.times, 0.8 * np.arange(1, 13), atol=1e-10)
    assert train.window == WINDOW
    assert train.metadata['mode'] == 'analytic'


def test_initial_value_shortens_first_spike(unit_params):
    train = encode(ConstantSignal(0.0, WINDOW), unit_params, y0=0.0, c=0.0)
    assert train.times[0] == pytest.approx(0.5, abs=1e-10)
    np.testing.assert_allclose(np.diff(train.times), 1.0, atol=1e-10)


def test_rejects_initial_value_outside_range(unit_params):
    with pytest.raises(ValueError):
        encode(ConstantSignal(0.0, WINDOW), unit_params, y0=1.0, c=0.0)


def test_discrete_mode_close_to_analytic(medium_signal):
    c = estimate_bound(medium_signal)
    params = TemParams(1.0, 1.0, c + 1.0)
    exact = encode(medium_signal, params, c=c)
    approx = encode(medium_signal, params, c=c, mode='discrete')
    # a spike within one step of the window end may be lost
    assert abs(approx.n_spikes - exact.n_spikes) <= 1
    n = min(approx.n_spikes, exact.n_spikes)
    np.testing.assert_allclose(approx.times[:n], exact.times[:n], atol=1e-3)


def test_unknown_mode(unit_params):
    with pytest.raises(ValueError, match="unknown encoding mode"):
        encode(ConstantSignal(0.0, WINDOW), unit_params, c=0.0, mode='euler')


def test_bias_warning(unit_params):
    params = TemParams(1.0, 1.0, 0.4)
    with pytest.warns(RuntimeWarning, match="bias does not exceed signal bound"):
        encode(ConstantSignal(0.5, WINDOW), params, c=0.5)


@pytest.mark.parametrize('m', [1, 2, 3])
def test_interval_integrals_match_primitive(medium_signal, m):
    c = estimate_bound(medium_signal)
    params = TemParams(1.0, 1.0, c + 1.0)
    multi = encode_multi(medium_signal, MultiChannelConfig.equal(params, m), c=c)
    q = interval_integrals(multi)
    exact = medium_signal.primitive(multi.times[m:]) - medium_signal.primitive(multi.times[:-m])
    np.testing.assert_allclose(q, exact, atol=1e-9)


def test_gaps_respect_period_bound(medium_signal):
    c = estimate_bound(medium_signal)
    params = TemParams(1.0, 1.0, c + 1.0)
    train = encode(medium_signal, params, c=c)
    assert np.max(np.diff(train.times)) <= params.period_bound(c)
    assert np.min(np.diff(train.times)) >= 2 * params.kappa * params.delta / (params.bias + c)


def test_integrator_stays_in_range(medium_signal):
    c = estimate_bound(medium_signal)
    params = TemParams(1.0, 1.0, c + 1.0)
    train = encode(medium_signal, params, c=c)
    y = integrator_trace(medium_signal, train, make_grid(WINDOW, 3000).times)
    assert np.all(y >= -params.delta - 1e-8)
    assert np.all(y <= params.delta + 1e-8)


@pytest.mark.parametrize('shifts', [[1.0], [0.4, 0.7], [0.3, 0.3, 0.3]])
def test_channel_integrators_differ_by_their_shift(medium_signal, shifts):
    c = estimate_bound(medium_signal)
    params = TemParams(1.0, 1.0, c + 1.0)
    multi = encode_multi(medium_signal, MultiChannelConfig.from_shifts(params, shifts), c=c)
    times = make_grid(WINDOW, 3000).times
    traces = [integrator_trace(medium_signal, train, times) for train in multi.as_trains()]

    for i, alpha in enumerate(multi.config.shifts[:-1]):
        gap = traces[i + 1] - traces[i] - alpha
        wrapped = np.mod(gap + params.delta, 2 * params.delta) - params.delta
        assert np.max(np.abs(wrapped)) < 1e-8


def test_hand_built_train_starts_at_minus_delta():
    params = TemParams(1.0, 1.0, 2.0)
    train = SpikeTrain(times=[1.0, 2.0, 3.0], params=params, window=(0.0, 4.0))
    assert train.y0 == -1.0
    # x = 0: the integrator climbs at b / kappa = 2 and fires every second
    dc = ConstantSignal(0.0, (0.0, 4.0))
    np.testing.assert_allclose(integrator_trace(dc, train, [0.0, 0.5, 1.5, 2.5]),
                               [-1.0, 0.0, 0.0, 0.0], atol=1e-12)
    assert SpikeTrain(times=[1.0], params=params, window=(0.0, 4.0), y0=0.25).y0 == 0.25


@pytest.mark.parametrize('m', [2, 3, 5])
def test_shifted_channels_interleave(medium_signal, m):
    c = estimate_bound(medium_signal)
    params = TemParams(1.0, 1.0, c + 1.0)
    multi = encode_multi(medium_signal, MultiChannelConfig.equal(params, m), c=c)
    assert multi.n_channels == m
    assert check_interleaving(multi)
    assert np.all(np.diff(multi.times) > 0)


def test_zero_shift_rejected(unit_params):
    config = MultiChannelConfig(unit_params, (0.0, 0.0), (-1.0, -1.0))
    with pytest.raises(ValueError, match="zero shift: channels degenerate"):
        encode_multi(ConstantSignal(0.0, WINDOW), config, c=0.0)


def test_encode_window_extends_past_signal(slow_signal, margin_params):
    params, c = margin_params(slow_signal)
    wide = (-2.0, 12.0)
    multi = encode_multi(slow_signal, MultiChannelConfig.equal(params, 2), c=c, window=wide)
    assert multi.window == wide
    assert multi.times[0] < 0.0
    assert multi.times[-1] > 10.0
    q = interval_integrals(multi)
    exact = slow_signal.primitive(multi.times[2:]) - slow_signal.primitive(multi.times[:-2])
    np.testing.assert_allclose(q, exact, atol=1e-9)


def test_split_and_events(medium_signal):
    c = estimate_bound(medium_signal)
    params = TemParams(1.0, 1.0, c + 1.0)
    multi = encode_multi(medium_signal, MultiChannelConfig.equal(params, 2), c=c)
    trains = multi.as_trains()
    assert [t.n_spikes for t in trains] == [int(np.sum(multi.channels == ch)) for ch in range(2)]
    assert trains[1].y0 == pytest.approx(0.0)
    events = multi.events
    assert len(events) == multi.n_spikes
    assert events[0] == (multi.times[0], multi.channels[0])


def test_spike_train_validation(unit_params):
    with pytest.raises(ValueError):
        SpikeTrain(times=[1.0, 1.0], params=unit_params, window=WINDOW)
    with pytest.raises(ValueError):
        interval_integrals(SpikeTrain(times=[1.0], params=unit_params, window=WINDOW))
    config = MultiChannelConfig.equal(unit_params, 2)
    with pytest.raises(ValueError):
        MultiSpikeTrain(times=[1.0, 2.0], channels=[0, 2], config=config, window=WINDOW)


# =============================================================================
# DIAGNOSTICS
# =============================================================================

def test_diagnostics_single_channel(medium_signal):
    c = estimate_bound(medium_signal)
    params = TemParams(1.0, 1.0, c + 1.0)
    report = diagnostics(encode(medium_signal, params, c=c), c)
    assert report.rate_ok
    assert report.rate_bound == pytest.approx(0.5)
    assert report.separation_bound is None
    assert report.to_dict()['separation_ok'] is None


def test_diagnostics_multi_channel(medium_signal):
    c = estimate_bound(medium_signal)
    params = TemParams(1.0, 1.0, c + 1.0)
    multi = encode_multi(medium_signal, MultiChannelConfig.equal(params, 3), c=c)
    report = diagnostics(multi, c)
    assert len(report.channel_rates) == 3
    assert report.rate_ok
    assert report.separation_bound == pytest.approx((2 / 3) / (params.bias + c))
    assert report.separation_ok


# =============================================================================
# JITTER
# =============================================================================

def test_no_jitter_returns_same_train(unit_params):
    train = encode(ConstantSignal(0.0, WINDOW), unit_params, c=0.0)
    assert add_time_jitter(train, None) is train
    assert add_time_jitter(train, float('inf')) is train


def test_jitter_sigma_formula(unit_params):
    train = encode(ConstantSignal(0.0, WINDOW), unit_params, c=0.0)
    # every gap is 1 s
    assert jitter_sigma(train, 20.0) == pytest.approx(0.1)


def test_jitter_is_seeded(medium_signal):
    c = estimate_bound(medium_signal)
    params = TemParams(1.0, 1.0, c + 1.0)
    multi = encode_multi(medium_signal, MultiChannelConfig.equal(params, 2), c=c)
    a = add_time_jitter(multi, 40.0, seed=9)
    b = add_time_jitter(multi, 40.0, seed=9)
    np.testing.assert_array_equal(a.times, b.times)
    assert not np.array_equal(a.times, multi.times)
    assert a.metadata['snr_db'] == 40.0
    assert a.metadata['jitter_seed'] == 9
    assert isinstance(a.metadata['reordered'], bool)
    assert np.all(np.diff(a.times) >= 0)


def test_jitter_rejects_nan(unit_params):
    train = encode(ConstantSignal(0.0, WINDOW), unit_params, c=0.0)
    with pytest.raises(ValueError):
        add_time_jitter(train, float('nan'))
