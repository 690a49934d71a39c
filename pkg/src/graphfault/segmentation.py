"""Entropy-driven window/step selection and signal slicing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    EmptySearchSpace,
    NegativeProbability,
    NoSegments,
    TooShort,
    WindowExceedsSignal,
)
from .spectral import default_subsegment_len, hilbert_envelope, welch_psd

EPS = 1e-10
MAX_BINS = 512
MIN_WINDOW = 32


@dataclass(frozen=True)
class EntropyWeights:
    alpha: float = 0.5
    alpha_t: float = 0.5
    alpha_s: float = 0.5

    def __post_init__(self):
        for name in ("alpha", "alpha_t", "alpha_s"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class SearchSpace:
    window_sizes: tuple = (256, 512, 1024, 2048, 4096)
    overlap_ratios: tuple = (0.0, 0.25, 0.4, 0.5, 0.75)

    def __post_init__(self):
        object.__setattr__(self, "window_sizes", tuple(sorted(int(w) for w in self.window_sizes)))
        object.__setattr__(self, "overlap_ratios", tuple(float(r) for r in self.overlap_ratios))
        if any(w < MIN_WINDOW for w in self.window_sizes):
            raise ConfigError(f"window sizes must be >= {MIN_WINDOW}")
        if any(not 0.0 <= r < 1.0 for r in self.overlap_ratios):
            raise ConfigError("overlap ratios must lie in [0, 1)")

    def candidates(self):
        """(window, step) pairs in ascending window then overlap order."""
        for w in self.window_sizes:
            for r in self.overlap_ratios:
                yield w, step_for(w, r)


@dataclass
class SegmentationParams:
    window: int
    step: int
    score: float = float("nan")
    grid: list = field(default_factory=list, repr=False)


@dataclass
class EntropyProfile:
    h_amplitude: float
    h_envelope: float
    h_spectral: float
    h_env_spectrum: float

    def as_array(self) -> np.ndarray:
        return np.array([self.h_amplitude, self.h_envelope, self.h_spectral, self.h_env_spectrum])


def step_for(window: int, overlap: float) -> int:
    return max(1, int(math.floor(window * (1.0 - overlap))))


def freedman_diaconis_bins(samples) -> int:
    """Freedman-Diaconis bin count ``ceil(range / (2 IQR n^-1/3))`` in [1, 512]."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise TooShort("need at least 2 samples for a bin count")
    q75, q25 = np.percentile(x, [75, 25])
    iqr = q75 - q25
    span = x.max() - x.min()
    if iqr <= 0 or span <= 0:
        return 1
    width = 2.0 * iqr * x.size ** (-1.0 / 3.0)
    return int(min(MAX_BINS, max(1, math.ceil(span / width))))


def histogram_probs(samples, bins: int) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64).ravel()
    lo, hi = x.min(), x.max()
    if lo == hi:
        counts = np.array([x.size], dtype=np.float64)
    else:
        counts, _ = np.histogram(x, bins=bins, range=(lo, hi))
    return counts / (x.size + EPS)


def shannon_entropy(probs) -> float:
    p = np.asarray(probs, dtype=np.float64).ravel()
    if np.any(p < 0):
        raise NegativeProbability("probabilities must be nonnegative")
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def _spectral_entropy(power) -> float:
    return shannon_entropy(power / (power.sum() + EPS))


def _channel_entropies(x, fs):
    env = hilbert_envelope(x)
    nseg = default_subsegment_len(x.size)
    h_a = shannon_entropy(histogram_probs(x, freedman_diaconis_bins(x)))
    h_e = shannon_entropy(histogram_probs(env, freedman_diaconis_bins(env)))
    h_s = _spectral_entropy(welch_psd(x, fs, nseg).power)
    h_es = _spectral_entropy(welch_psd(env, fs, nseg).power)
    return h_a, h_e, h_s, h_es


def segment_entropies(segment, sample_rate_hz: float) -> EntropyProfile:
    """Amplitude, envelope, spectral and envelope-spectrum entropies (nats).

    Multi-channel segments give the channel mean of each entropy.
    """
    seg = np.asarray(segment, dtype=np.float64)
    if seg.ndim == 1:
        seg = seg[:, None]
    if seg.shape[0] < MIN_WINDOW:
        raise TooShort(f"segment needs at least {MIN_WINDOW} samples, got {seg.shape[0]}")
    vals = np.mean([_channel_entropies(seg[:, c], sample_rate_hz) for c in range(seg.shape[1])], axis=0)
    return EntropyProfile(*map(float, vals))


def objective_score(profile: EntropyProfile, window: int, weights: EntropyWeights) -> float:
    h_t = weights.alpha_t * profile.h_amplitude + (1 - weights.alpha_t) * profile.h_envelope
    h_f = weights.alpha_s * profile.h_spectral + (1 - weights.alpha_s) * profile.h_env_spectrum
    return (weights.alpha * h_t + (1 - weights.alpha) * h_f) / math.log1p(window)


def segment_count(n_samples: int, window: int, step: int) -> int:
    return (n_samples - window) // step


def segment_signal(signal, window: int, step: int) -> list:
    """Views ``samples[i*step : i*step + window]`` for ``i < (N - window) // step``."""
    samples = signal.samples if hasattr(signal, "samples") else np.asarray(signal)
    if samples.ndim == 1:
        samples = samples[:, None]
    n = samples.shape[0]
    if window > n:
        raise WindowExceedsSignal(f"window {window} exceeds signal length {n}")
    if step < 1:
        raise ConfigError(f"step must be >= 1, got {step}")
    count = segment_count(n, window, step)
    if count < 1:
        raise NoSegments(f"no segments for N={n}, window={window}, step={step}")
    return [samples[i * step : i * step + window] for i in range(count)]


def _evenly_spaced(items, cap):
    if cap is None or len(items) <= cap:
        return items
    idx = np.linspace(0, len(items) - 1, cap).round().astype(int)
    return [items[i] for i in idx]


def evaluate_candidate(signal, window, step, weights, max_segments=None):
    """Objective of the mean entropy profile over the signal's segments."""
    segs = _evenly_spaced(segment_signal(signal, window, step), max_segments)
    mean = np.mean([segment_entropies(s, signal.sample_rate_hz).as_array() for s in segs], axis=0)
    return objective_score(EntropyProfile(*map(float, mean)), window, weights)


def optimize_window(signal, space: SearchSpace | None = None, weights: EntropyWeights | None = None,
                    max_segments: int | None = None) -> SegmentationParams:
    """Grid search for the (window, step) pair maximizing the entropy objective.

    Ties go to the smaller window, then the smaller step. ``max_segments``
    optionally scores an evenly spaced subset of segments for long records.
    Candidates whose window leaves no complete segment are skipped.
    """
    space = space or SearchSpace()
    weights = weights or EntropyWeights()
    if not space.window_sizes or not space.overlap_ratios:
        raise EmptySearchSpace("search space has no candidates")
    n = signal.samples.shape[0]
    if max(space.window_sizes) > n:
        raise WindowExceedsSignal(f"largest window {max(space.window_sizes)} exceeds signal length {n}")
    grid = []
    seen = set()
    for window, step in space.candidates():
        if (window, step) in seen or segment_count(n, window, step) < 1:
            continue
        seen.add((window, step))
        grid.append((window, step, evaluate_candidate(signal, window, step, weights, max_segments)))
    if not grid:
        raise NoSegments("no candidate in the search space yields a segment")
    best = min(grid, key=lambda g: (-g[2], g[0], g[1]))
    return SegmentationParams(best[0], best[1], best[2], grid)
