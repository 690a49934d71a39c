"""FFT magnitude, Welch PSD, Hilbert envelope and Teager-Kaiser energy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import NonFinite, SegmentTooShort, TooShort


@dataclass
class Spectrum:
    freqs_hz: np.ndarray
    magnitudes: np.ndarray


@dataclass
class Psd:
    freqs_hz: np.ndarray
    power: np.ndarray
    subsegment_len: int
    window_name: str = "hann"
    n_subsegments: int = 1


def _as_1d(samples, min_len, name):
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < min_len:
        raise TooShort(f"{name} needs at least {min_len} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise NonFinite(f"{name}: input contains NaN or infinite values")
    return x


def fft_magnitude(samples, sample_rate_hz: float) -> Spectrum:
    """Raw (unnormalized) one-sided DFT magnitudes, ``n//2 + 1`` bins."""
    x = _as_1d(samples, 2, "fft_magnitude")
    mags = np.abs(np.fft.rfft(x))
    freqs = np.fft.rfftfreq(x.size, d=1.0 / sample_rate_hz)
    return Spectrum(freqs, mags)


def default_subsegment_len(window: int) -> int:
    return min(256, window // 2)


def welch_psd(samples, sample_rate_hz: float, subsegment_len: int | None = None) -> Psd:
    """One-sided Welch PSD: Hann subsegments, 50% overlap, density scaling.

    No detrending, so a constant input keeps its power in the DC bin.
    """
    x = _as_1d(samples, 1, "welch_psd")
    if subsegment_len is None:
        subsegment_len = default_subsegment_len(x.size)
    if subsegment_len < 8 or subsegment_len > x.size:
        raise SegmentTooShort(
            f"subsegment_len must be in [8, {x.size}], got {subsegment_len}"
        )
    noverlap = subsegment_len // 2
    freqs, power = sps.welch(
        x,
        fs=sample_rate_hz,
        window="hann",
        nperseg=subsegment_len,
        noverlap=noverlap,
        detrend=False,
        return_onesided=True,
        scaling="density",
    )
    n_sub = (x.size - noverlap) // (subsegment_len - noverlap)
    return Psd(freqs, np.maximum(power, 0.0), subsegment_len, "hann", n_sub)


def hilbert_envelope(samples) -> np.ndarray:
    """Modulus of the analytic signal built in the frequency domain."""
    x = _as_1d(samples, 4, "hilbert_envelope")
    return np.abs(sps.hilbert(x))


def teager_kaiser_energy(samples) -> float:
    """Mean Teager-Kaiser energy ``x[j+1]^2 - x[j] x[j+2]`` over the segment."""
    x = _as_1d(samples, 3, "teager_kaiser_energy")
    psi = x[1:-1] ** 2 - x[:-2] * x[2:]
    return float(psi.sum() / (x.size - 2))
