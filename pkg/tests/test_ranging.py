import numpy as np
import pytest

from uwbloc.channel import SPEED_OF_LIGHT, ChannelProfile, material_response, propagate, sample_cir
from uwbloc.ranging import (
    BurstSpec,
    TDT_TRAINING_PATTERN,
    ToaEstimate,
    make_burst,
    range_from_toa,
    template_median_offset,
    toa_dirty_template,
    toa_nmse,
)
from uwbloc.waveform import Waveform, add_awgn, delay, energy

DT = 50e-12
TSYM = 50e-9
SYMBOLS = 20


@pytest.fixture(scope="module")
def pulse(default_pulses):
    return default_pulses.pulses[0]


def received(pulse, delay_s, seed=0, snr_db=float("inf"), channel=None, symbols=SYMBOLS):
    burst = make_burst(BurstSpec(pulse, TSYM, symbols))
    cir = sample_cir(channel or ChannelProfile(tap_count_min=1, tap_count_max=1), seed)
    rx = propagate(burst, delay_s * SPEED_OF_LIGHT, cir,
                   material_response("free_space", 0.0, 0.5 / pulse.dt))
    need = (symbols + 1) * round(TSYM / pulse.dt)
    if rx.samples.size < need:
        rx = Waveform(np.concatenate([rx.samples, np.zeros(need - rx.samples.size)]), rx.dt, rx.t0)
    return add_awgn(rx, snr_db, seed)


class TestMakeBurst:
    def test_two_symbols_spacing(self, pulse):
        burst = make_burst(BurstSpec(pulse, TSYM, 2))
        n = round(TSYM / DT)
        assert np.array_equal(burst.samples[: len(pulse)], pulse.samples)
        assert np.array_equal(burst.samples[n : n + len(pulse)], pulse.samples)

    def test_energy_scales_with_symbols(self, pulse):
        burst = make_burst(BurstSpec(pulse, TSYM, SYMBOLS))
        assert energy(burst) == pytest.approx(SYMBOLS * energy(pulse), rel=1e-12)

    def test_pattern_signs(self, pulse):
        burst = make_burst(BurstSpec(pulse, TSYM, 6))
        n = round(TSYM / DT)
        for k in range(6):
            sign = TDT_TRAINING_PATTERN[k % 4]
            assert np.array_equal(burst.samples[k * n : k * n + len(pulse)], sign * pulse.samples)

    def test_single_symbol_rejected(self, pulse):
        with pytest.raises(ValueError):
            BurstSpec(pulse, TSYM, 1)

    def test_symbol_shorter_than_pulse_rejected(self, pulse):
        with pytest.raises(ValueError):
            BurstSpec(pulse, 1e-9, 4)


class TestToaDirtyTemplate:
    def test_noiseless_ten_ns(self, pulse):
        rx = received(pulse, 10e-9)
        est = toa_dirty_template(rx, TSYM, SYMBOLS, template=pulse)
        assert abs(est.toa - 10e-9) <= DT

    def test_zero_delay(self, pulse):
        burst = make_burst(BurstSpec(pulse, TSYM, SYMBOLS))
        need = (SYMBOLS + 1) * round(TSYM / DT)
        rx = Waveform(np.concatenate([burst.samples, np.zeros(need - burst.samples.size)]), DT)
        est = toa_dirty_template(rx, TSYM, SYMBOLS, template=pulse)
        err = min(est.toa, TSYM - est.toa)  # zero wraps the ambiguity window
        assert err <= DT

    def test_fractional_delay_subsample(self, pulse):
        true = 13.738e-9
        rx = received(pulse, true)
        est = toa_dirty_template(rx, TSYM, SYMBOLS, template=pulse)
        assert abs(est.toa - true) <= 0.1 * DT

    def test_estimate_in_window(self, pulse):
        est = toa_dirty_template(received(pulse, 23e-9, snr_db=10, seed=4), TSYM, SYMBOLS,
                                 template=pulse)
        assert 0.0 <= est.toa - 0.0 < TSYM
        assert isinstance(est, ToaEstimate)
        assert est.grid_resolution == DT
        assert est.objective_peak > 0

    def test_shift_equivariance(self, pulse):
        rx = received(pulse, 10e-9)
        est0 = toa_dirty_template(rx, TSYM, SYMBOLS, template=pulse)
        k = 120
        shifted = Waveform(np.concatenate([np.zeros(k), rx.samples]), DT, rx.t0)
        est1 = toa_dirty_template(shifted, TSYM, SYMBOLS, template=pulse)
        delta = (est1.toa - est0.toa) % TSYM
        assert delta == pytest.approx(k * DT, abs=1e-15)

    def test_amplitude_invariance(self, pulse):
        rx = received(pulse, 17e-9, snr_db=20.0, seed=8)
        est1 = toa_dirty_template(rx, TSYM, SYMBOLS, template=pulse)
        est2 = toa_dirty_template(Waveform(rx.samples * 7.3, DT, rx.t0), TSYM, SYMBOLS,
                                  template=pulse)
        assert est1.toa == pytest.approx(est2.toa, abs=1e-15)

    def test_multipath_noiseless(self, pulse):
        rx = received(pulse, 15e-9, channel=ChannelProfile(), seed=3)
        est = toa_dirty_template(rx, TSYM, SYMBOLS, template=pulse)
        assert abs(est.toa - 15e-9) <= DT

    def test_without_template_bias_is_constant(self, pulse):
        # uncalibrated mode: raw notch positions differ from the truth by a
        # delay-independent constant
        biases = []
        for true in (10e-9, 17.3e-9, 24.04e-9):
            est = toa_dirty_template(received(pulse, true), TSYM, SYMBOLS)
            biases.append(est.toa - true)
        assert max(biases) - min(biases) <= 1.5 * DT

    def test_too_few_symbols(self, pulse):
        rx = received(pulse, 10e-9)
        with pytest.raises(ValueError):
            toa_dirty_template(rx, TSYM, 1)

    def test_insufficient_coverage(self, pulse):
        short = Waveform(np.ones(5 * round(TSYM / DT)), DT)
        with pytest.raises(ValueError):
            toa_dirty_template(short, TSYM, SYMBOLS)

    def test_no_signal(self, pulse):
        flat = Waveform(np.ones((SYMBOLS + 1) * round(TSYM / DT)), DT)
        with pytest.raises(ValueError):
            toa_dirty_template(flat, TSYM, SYMBOLS)

    def test_objective_minimum_sits_at_template_median(self, pulse):
        # the cancellation notch bottoms out where the slice boundary splits
        # the pulse energy in half: verifies the objective geometry directly
        from uwbloc.ranging import _dirty_template_objective, _slice_correlations

        true = 10e-9  # integer-sample delay
        rx = received(pulse, true)
        n = round(TSYM / DT)
        g = _slice_correlations(rx.samples, n)
        obj = _dirty_template_objective(g, n, SYMBOLS)
        t_med = template_median_offset(pulse)
        assert int(np.argmin(obj)) * DT == pytest.approx(true + t_med, abs=1.0 * DT)


class TestRangeFromToa:
    def test_ten_ns(self):
        est = ToaEstimate(toa=10e-9, objective_peak=1.0, grid_resolution=DT)
        assert range_from_toa(est, 0.0) == pytest.approx(2.99792458, rel=1e-12)

    def test_zero(self):
        est = ToaEstimate(toa=0.0, objective_peak=1.0, grid_resolution=DT)
        assert range_from_toa(est, 0.0) == 0.0

    def test_linearity_of_error(self):
        base = ToaEstimate(toa=10e-9, objective_peak=1.0, grid_resolution=DT)
        off = ToaEstimate(toa=10.1e-9, objective_peak=1.0, grid_resolution=DT)
        delta = range_from_toa(off, 0.0) - range_from_toa(base, 0.0)
        assert delta == pytest.approx(0.0299792458, rel=1e-9)

    def test_negative_flight_time(self):
        est = ToaEstimate(toa=1e-9, objective_peak=1.0, grid_resolution=DT)
        with pytest.raises(ValueError):
            range_from_toa(est, 2e-9)


class TestToaNmse:
    def test_exact_estimates(self):
        assert toa_nmse([10e-9, 10e-9], 10e-9, TSYM) == 0.0

    def test_half_symbol_error(self):
        assert toa_nmse([10e-9 + TSYM / 2], 10e-9, TSYM) == pytest.approx(0.25)

    def test_accepts_estimates(self):
        ests = [ToaEstimate(11e-9, 1.0, DT), ToaEstimate(9e-9, 1.0, DT)]
        expect = np.mean([1e-9**2, 1e-9**2]) / TSYM**2
        assert toa_nmse(ests, 10e-9, TSYM) == pytest.approx(expect)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            toa_nmse([], 10e-9, TSYM)
