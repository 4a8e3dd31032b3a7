"""Power spectral density estimation and spectral-mask bookkeeping.

Convention used throughout: the PSD of a pulse is its one-sided energy
spectral density expressed per MHz, in dB relative to a unit reference
(written dBm/MHz). Under this convention the linear-unit PSD integrates to
the pulse energy (Parseval), so compliance against a mask in the same units
pins the admissible pulse energy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .waveform import Waveform

__all__ = [
    "DisjointBandError",
    "SpectralMask",
    "fcc_like_mask",
    "psd",
    "mask_violation",
    "effectiveness",
    "mask_to_json",
    "mask_from_json",
]

# Clamp applied to log of empty bins; a zero waveform reports this everywhere.
DB_FLOOR = -400.0

HZ_PER_MHZ = 1e6


class DisjointBandError(ValueError):
    """Spectrum and mask have no frequency band in common."""


@dataclass(frozen=True)
class SpectralMask:
    """Piecewise-constant PSD ceiling: contiguous (f_lo, f_hi, limit) segments.

    Limits are in dBm/MHz; segments must be contiguous and non-overlapping.
    """

    segments: tuple[tuple[float, float, float], ...]

    def __post_init__(self) -> None:
        segs = tuple((float(a), float(b), float(c)) for a, b, c in self.segments)
        if not segs:
            raise ValueError("mask needs at least one segment")
        for f_lo, f_hi, _ in segs:
            if not f_lo < f_hi:
                raise ValueError(f"segment must have f_lo < f_hi, got [{f_lo}, {f_hi}]")
        for (_, hi_prev, _), (lo_next, _, _) in zip(segs, segs[1:]):
            if not np.isclose(hi_prev, lo_next, rtol=1e-9, atol=1e-3):
                raise ValueError("mask segments must be contiguous")
        object.__setattr__(self, "segments", segs)

    @property
    def f_lo(self) -> float:
        return self.segments[0][0]

    @property
    def f_hi(self) -> float:
        return self.segments[-1][1]

    def limit_at(self, freq_hz: np.ndarray) -> np.ndarray:
        """Mask limit (dBm/MHz) at each frequency; NaN outside coverage."""
        f = np.asarray(freq_hz, dtype=float)
        out = np.full(f.shape, np.nan)
        for f_lo, f_hi, lim in self.segments:
            sel = (f >= f_lo) & (f < f_hi)
            out[sel] = lim
        out[np.isclose(f, self.f_hi)] = self.segments[-1][2]
        return out

    def integral_linear(self, f_lo: float | None = None, f_hi: float | None = None) -> float:
        """Integral of the linear-unit mask over [f_lo, f_hi] (MHz axis)."""
        lo = self.f_lo if f_lo is None else max(f_lo, self.f_lo)
        hi = self.f_hi if f_hi is None else min(f_hi, self.f_hi)
        total = 0.0
        for a, b, lim in self.segments:
            width = max(0.0, min(b, hi) - max(a, lo))
            total += 10.0 ** (lim / 10.0) * width / HZ_PER_MHZ
        return total


def fcc_like_mask(
    band_lo_hz: float = 0.5e9,
    band_hi_hz: float = 2.5e9,
    passband_dbm_mhz: float = -41.3,
    stopband_dbm_mhz: float = -51.3,
    full_band_hi_hz: float = 10e9,
    notch: tuple[float, float, float] | None = None,
) -> SpectralMask:
    """Baseband-equivalent FCC-like mask: a passband ceiling with stopbands.

    ``notch`` optionally carves (f_lo, f_hi, limit) out of the passband to
    exercise the pulse optimizer. This is a reproducible stand-in table, not
    a regulatory document.
    """
    segs: list[tuple[float, float, float]] = []
    if band_lo_hz > 0.0:
        segs.append((0.0, band_lo_hz, stopband_dbm_mhz))
    if notch is None:
        segs.append((band_lo_hz, band_hi_hz, passband_dbm_mhz))
    else:
        n_lo, n_hi, n_lim = notch
        if not (band_lo_hz < n_lo < n_hi < band_hi_hz):
            raise ValueError("notch must lie strictly inside the passband")
        segs.append((band_lo_hz, n_lo, passband_dbm_mhz))
        segs.append((n_lo, n_hi, n_lim))
        segs.append((n_hi, band_hi_hz, passband_dbm_mhz))
    if full_band_hi_hz > band_hi_hz:
        segs.append((band_hi_hz, full_band_hi_hz, stopband_dbm_mhz))
    return SpectralMask(tuple(segs))


def psd(w: Waveform, nfft: int) -> tuple[np.ndarray, np.ndarray]:
    """One-sided periodogram of a pulse in dBm/MHz.

    Returns (freq_hz, density_db). The linear-unit density integrates to
    energy(w): sum(10**(density/10) * df_mhz) == energy to rounding. Empty
    bins are clamped at DB_FLOOR.
    """
    n = w.samples.size
    if nfft < n:
        raise ValueError(f"nfft ({nfft}) must be >= sample count ({n})")
    spec = np.fft.rfft(w.samples, n=nfft) * w.dt
    esd = np.abs(spec) ** 2
    # one-sided: double everything except DC and (for even nfft) Nyquist
    weights = np.full(esd.shape, 2.0)
    weights[0] = 1.0
    if nfft % 2 == 0:
        weights[-1] = 1.0
    lin = esd * weights * HZ_PER_MHZ
    density = np.full(lin.shape, DB_FLOOR)
    nz = lin > 10.0 ** (DB_FLOOR / 10.0)
    density[nz] = 10.0 * np.log10(lin[nz])
    freq = np.fft.rfftfreq(nfft, d=w.dt)
    return freq, density


def _common_band(freq_hz: np.ndarray, mask: SpectralMask) -> np.ndarray:
    sel = (freq_hz >= mask.f_lo) & (freq_hz <= mask.f_hi)
    if not np.any(sel):
        raise DisjointBandError(
            f"spectrum band [{freq_hz[0]:.3g}, {freq_hz[-1]:.3g}] Hz does not "
            f"meet mask band [{mask.f_lo:.3g}, {mask.f_hi:.3g}] Hz"
        )
    return sel


def mask_violation(freq_hz: np.ndarray, density_db: np.ndarray, mask: SpectralMask) -> float:
    """Worst-case exceedance (dB) of the spectrum over the mask; <= 0 complies."""
    freq_hz = np.asarray(freq_hz, dtype=float)
    density_db = np.asarray(density_db, dtype=float)
    sel = _common_band(freq_hz, mask)
    limits = mask.limit_at(freq_hz[sel])
    return float(np.max(density_db[sel] - limits))


def effectiveness(freq_hz: np.ndarray, density_db: np.ndarray, mask: SpectralMask) -> float:
    """Fraction of the mask's allowed power budget the spectrum actually uses.

    Ratio of the linear-unit spectrum integral to the linear-unit mask
    integral, both over the mask's coverage band.
    """
    freq_hz = np.asarray(freq_hz, dtype=float)
    density_db = np.asarray(density_db, dtype=float)
    sel = _common_band(freq_hz, mask)
    denom = mask.integral_linear()
    if denom <= 0.0:
        raise ValueError("mask has zero integral; effectiveness undefined")
    f = freq_hz[sel]
    lin = 10.0 ** (density_db[sel] / 10.0)
    df_mhz = float(np.median(np.diff(freq_hz))) / HZ_PER_MHZ
    num = float(np.sum(lin) * df_mhz) if f.size > 1 else 0.0
    return num / denom


# -- serialization ----------------------------------------------------------

def mask_to_json(mask: SpectralMask, path: str | Path | None = None) -> list[dict]:
    obj = [
        {"f_lo_hz": a, "f_hi_hz": b, "limit_dbm_per_mhz": lim}
        for a, b, lim in mask.segments
    ]
    if path is not None:
        Path(path).write_text(json.dumps(obj, indent=2))
    return obj


def mask_from_json(source: str | Path | list) -> SpectralMask:
    if isinstance(source, list):
        obj = source
    else:
        obj = json.loads(Path(source).read_text())
    segs = tuple(
        (float(s["f_lo_hz"]), float(s["f_hi_hz"]), float(s["limit_dbm_per_mhz"]))
        for s in obj
    )
    return SpectralMask(segs)
