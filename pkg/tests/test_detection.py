import numpy as np
import pytest

from uwbloc.channel import MaterialSignature, apply_signature, material_response
from uwbloc.detection import (
    DetectionThresholds,
    classify,
    default_band,
    estimate_transfer,
    mean_attenuation,
    phase_nonlinearity,
)
from uwbloc.waveform import Waveform, add_awgn, delay

DT = 50e-12


@pytest.fixture(scope="module")
def tx(default_pulses):
    return default_pulses.pulses[0]


class TestEstimateTransfer:
    def test_identity(self, tx):
        sig = estimate_transfer(tx, tx)
        assert np.allclose(sig.attenuation_db, 0.0, atol=1e-9)
        assert np.allclose(sig.phase_rad, 0.0, atol=1e-9)

    def test_constant_gain(self, tx):
        rx = Waveform(0.1 * tx.samples, tx.dt)
        sig = estimate_transfer(tx, rx)
        assert np.allclose(sig.attenuation_db, 20.0, atol=1e-9)
        assert np.allclose(sig.phase_rad, 0.0, atol=1e-9)

    def test_delay_gives_linear_phase(self, tx):
        tau = 23.5 * DT
        rx = delay(tx, tau)
        sig = estimate_transfer(tx, rx)
        assert abs(mean_attenuation(sig)) < 0.2
        slope = np.polyfit(sig.freq_hz, sig.phase_rad, 1)[0]
        assert slope == pytest.approx(-2 * np.pi * tau, rel=0.01)

    def test_band_below_noise_floor(self, tx):
        with pytest.raises(ValueError):
            estimate_transfer(tx, tx, band=(9.0e9, 9.9e9))

    def test_mismatched_dt(self, tx):
        rx = Waveform(tx.samples, 2 * tx.dt)
        with pytest.raises(ValueError):
            estimate_transfer(tx, rx)

    def test_default_band_is_strong(self, tx):
        f_lo, f_hi = default_band(tx)
        assert 0.0 <= f_lo < f_hi <= 0.5 / tx.dt
        assert f_hi - f_lo > 0.2e9


class TestPhaseNonlinearity:
    def test_linear_phase_zero(self):
        f = np.linspace(0.5e9, 2.5e9, 301)
        sig = MaterialSignature(f, np.ones(301), -2 * np.pi * 1e-9 * f + 0.7)
        assert phase_nonlinearity(sig) < 1e-9

    def test_constant_phase_zero(self):
        f = np.linspace(0.5e9, 2.5e9, 301)
        sig = MaterialSignature(f, np.ones(301), np.full(301, 0.4))
        assert phase_nonlinearity(sig) < 1e-12

    def test_quadratic_matches_regression_oracle(self):
        f = np.linspace(1.0e9, 1.4e9, 401)
        q = 3e-18
        phase = 0.3 * (f - f[0]) * 1e-9 + q * (f - f.mean()) ** 2
        sig = MaterialSignature(f, np.ones(401), phase)
        # oracle: residual RMS of an independently fitted first-degree polynomial
        coeffs = np.polynomial.polynomial.polyfit(f - f.mean(), phase, 1)
        resid = phase - np.polynomial.polynomial.polyval(f - f.mean(), coeffs)
        assert phase_nonlinearity(sig) == pytest.approx(float(np.sqrt(np.mean(resid**2))), rel=1e-9)

    def test_affine_invariance(self, rng):
        f = np.linspace(0.5e9, 2.5e9, 257)
        wiggle = np.cumsum(rng.normal(size=257)) * 1e-2
        base = MaterialSignature(f, np.ones(257), wiggle)
        shifted = MaterialSignature(f, np.ones(257), wiggle + 3.0 - 2e-9 * f)
        assert phase_nonlinearity(base) == pytest.approx(phase_nonlinearity(shifted), rel=1e-9)

    def test_too_few_points(self):
        sig = MaterialSignature(np.array([1e9, 2e9]), np.zeros(2), np.zeros(2))
        with pytest.raises(ValueError):
            phase_nonlinearity(sig)


class TestMeanAttenuation:
    def test_flat_values(self):
        f = np.linspace(0.5e9, 2.5e9, 10)
        assert mean_attenuation(MaterialSignature(f, np.full(10, 10.0), np.zeros(10))) == 10.0
        assert mean_attenuation(MaterialSignature(f, np.zeros(10), np.zeros(10))) == 0.0

    def test_human_signature_level(self):
        assert mean_attenuation(material_response("human")) == pytest.approx(50.0, abs=2.0)


class TestClassify:
    def grid(self):
        return np.linspace(0.5e9, 2.5e9, 301)

    def test_human(self):
        f = self.grid()
        phase = 1e-17 * (f - f.mean()) ** 2
        verdict = classify(MaterialSignature(f, np.full(301, 50.0), phase))
        assert verdict.label == "human_present"

    def test_artificial(self):
        f = self.grid()
        verdict = classify(MaterialSignature(f, np.full(301, 10.0), -2e-9 * f))
        assert verdict.label == "artificial_only"

    def test_free_space(self):
        f = self.grid()
        verdict = classify(MaterialSignature(f, np.zeros(301), np.zeros(301)))
        assert verdict.label == "free_space"

    def test_lossy_but_linear_is_artificial(self):
        f = self.grid()
        verdict = classify(MaterialSignature(f, np.full(301, 60.0), -2e-9 * f))
        assert verdict.label == "artificial_only"

    def test_verdict_carries_metrics_and_thresholds(self):
        f = self.grid()
        verdict = classify(MaterialSignature(f, np.full(301, 10.0), np.zeros(301)),
                           DetectionThresholds(attenuation_db=25.0, nonlinearity_rad=0.5))
        assert verdict.mean_attenuation_db == pytest.approx(10.0)
        assert verdict.thresholds_used == (25.0, 0.5)

    def test_rx_scaling_shifts_attenuation_only(self, tx):
        rx = apply_signature(tx, material_response("wood_door"))
        sig1 = estimate_transfer(tx, rx)
        sig2 = estimate_transfer(tx, Waveform(rx.samples * 0.5, rx.dt))
        shift = mean_attenuation(sig2) - mean_attenuation(sig1)
        assert shift == pytest.approx(-20 * np.log10(0.5), abs=0.01)
        assert phase_nonlinearity(sig1) == pytest.approx(phase_nonlinearity(sig2), abs=1e-6)


class TestRoundTrip:
    @pytest.mark.parametrize("kind", ["wood_door", "human"])
    def test_apply_then_estimate_recovers(self, tx, kind):
        sig = material_response(kind)
        rx = apply_signature(tx, sig)
        est = estimate_transfer(tx, rx)
        truth_att = np.interp(est.freq_hz, sig.freq_hz, sig.attenuation_db)
        truth_phase = np.interp(est.freq_hz, sig.freq_hz, sig.phase_rad)
        att_err = np.sqrt(np.mean((est.attenuation_db - truth_att) ** 2))
        # the estimated phase may differ by whole turns of the unwrap seed
        dphi = est.phase_rad - truth_phase
        dphi -= 2 * np.pi * np.round(np.mean(dphi) / (2 * np.pi))
        phase_err = np.sqrt(np.mean(dphi**2))
        assert att_err <= 0.5
        assert phase_err <= 0.05

    def test_end_to_end_noiseless_all_kinds(self, tx):
        from uwbloc.channel import MATERIAL_KINDS

        expected = {
            "free_space": "free_space",
            "wood_door": "artificial_only",
            "brick_wall": "artificial_only",
            "human": "human_present",
            "human_behind_door": "human_present",
            "human_behind_wall": "human_present",
        }
        for kind in MATERIAL_KINDS:
            rx = apply_signature(tx, material_response(kind))
            verdict = classify(estimate_transfer(tx, rx))
            assert verdict.label == expected[kind], kind
