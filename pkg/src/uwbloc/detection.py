"""Human-presence classification from attenuation and phase-linearity.

A propagation medium leaves two fingerprints on a UWB signal: how much it
attenuates, and whether its phase response stays linear in frequency.
Artificial structures (doors, walls) are lossy but phase-linear; a human
body is both strongly lossy and phase-distorting. The classifier requires
both features to call a human, which suppresses false alarms from merely
lossy media.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import MaterialSignature
from .waveform import Waveform

__all__ = [
    "DetectionThresholds",
    "DetectionVerdict",
    "default_band",
    "estimate_transfer",
    "phase_nonlinearity",
    "mean_attenuation",
    "classify",
]

# Spectral-division bins this far (dB) under the TX peak are discarded.
NOISE_FLOOR_REL_DB = -40.0


@dataclass(frozen=True)
class DetectionThresholds:
    attenuation_db: float = 30.0
    nonlinearity_rad: float = 0.3
    artificial_floor_db: float = 3.0


@dataclass(frozen=True)
class DetectionVerdict:
    label: str  # human_present | artificial_only | free_space
    mean_attenuation_db: float
    phase_nonlinearity: float
    thresholds_used: tuple[float, float]

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mean_attenuation_db) and self.mean_attenuation_db >= 0):
            raise ValueError("mean attenuation must be finite and >= 0")
        if not (math.isfinite(self.phase_nonlinearity) and self.phase_nonlinearity >= 0):
            raise ValueError("phase nonlinearity must be finite and >= 0")


def default_band(tx: Waveform, drop_db: float = 10.0, nfft: int | None = None) -> tuple[float, float]:
    """The TX pulse's -10 dB bandwidth: default band for transfer metrics."""
    n = nfft or max(4096, tx.samples.size)
    spec = np.abs(np.fft.rfft(tx.samples, n=n))
    freq = np.fft.rfftfreq(n, d=tx.dt)
    thresh = spec.max() * 10.0 ** (-drop_db / 20.0)
    strong = np.nonzero(spec >= thresh)[0]
    return float(freq[strong[0]]), float(freq[strong[-1]])


def estimate_transfer(
    tx: Waveform,
    rx: Waveform,
    band: tuple[float, float] | None = None,
    nfft: int | None = None,
    noise_floor_rel_db: float = NOISE_FLOOR_REL_DB,
) -> MaterialSignature:
    """Estimate the medium's frequency response as the spectral ratio RX/TX.

    Bins where |TX| sits below ``noise_floor_rel_db`` of its peak are
    excluded (division there is dominated by noise). Attenuation is clamped
    at zero so noise cannot report gain. ``band`` defaults to the TX pulse's
    -10 dB bandwidth.
    """
    if not math.isclose(tx.dt, rx.dt, rel_tol=1e-12):
        raise ValueError(f"sample intervals differ: {tx.dt} vs {rx.dt}")
    n = nfft or max(tx.samples.size, rx.samples.size)
    if band is None:
        band = default_band(tx, nfft=n)
    f_lo, f_hi = band
    tx_spec = np.fft.rfft(tx.samples, n=n)
    rx_spec = np.fft.rfft(rx.samples, n=n)
    freq = np.fft.rfftfreq(n, d=tx.dt)
    floor = np.max(np.abs(tx_spec)) * 10.0 ** (noise_floor_rel_db / 20.0)
    keep = (freq >= f_lo) & (freq <= f_hi) & (np.abs(tx_spec) >= floor)
    if np.count_nonzero(keep) < 3:
        raise ValueError(
            f"band [{f_lo:.3g}, {f_hi:.3g}] Hz is entirely below the TX noise floor")
    h = rx_spec[keep] / tx_spec[keep]
    attenuation = np.clip(-20.0 * np.log10(np.maximum(np.abs(h), 1e-300)), 0.0, None)
    phase = np.unwrap(np.angle(h))
    return MaterialSignature(freq[keep], attenuation, phase)


def phase_nonlinearity(sig: MaterialSignature) -> float:
    """RMS residual (rad) of the best linear fit of unwrapped phase vs frequency.

    Zero for any affine phase; invariant under adding an affine function.
    """
    if sig.freq_hz.size < 3:
        raise ValueError("need at least 3 frequency points for a linearity metric")
    f = sig.freq_hz - sig.freq_hz.mean()
    basis = np.column_stack([f, np.ones_like(f)])
    coef, *_ = np.linalg.lstsq(basis, sig.phase_rad, rcond=None)
    resid = sig.phase_rad - basis @ coef
    return float(np.sqrt(np.mean(resid**2)))


def mean_attenuation(sig: MaterialSignature) -> float:
    """Arithmetic mean of the attenuation over the signature band."""
    if sig.attenuation_db.size == 0:
        raise ValueError("empty signature")
    return float(np.mean(sig.attenuation_db))


def classify(sig: MaterialSignature, thresholds: DetectionThresholds | None = None) -> DetectionVerdict:
    """Label a signature from its two fingerprint metrics.

    human_present needs high attenuation AND nonlinear phase; a lossy medium
    failing either test is artificial_only; anything nearly transparent is
    free_space.
    """
    th = thresholds or DetectionThresholds()
    atten = mean_attenuation(sig)
    nonlin = phase_nonlinearity(sig)
    if atten >= th.attenuation_db and nonlin >= th.nonlinearity_rad:
        label = "human_present"
    elif atten >= th.artificial_floor_db:
        label = "artificial_only"
    else:
        label = "free_space"
    return DetectionVerdict(
        label=label,
        mean_attenuation_db=atten,
        phase_nonlinearity=nonlin,
        thresholds_used=(th.attenuation_db, th.nonlinearity_rad),
    )
