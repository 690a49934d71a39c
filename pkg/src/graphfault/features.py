"""Per-segment feature vectors, feature matrices and standardization."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionMismatch, EmptyFitSet, NonFinite, TooShort
from .segmentation import segment_signal
from .spectral import (
    default_subsegment_len,
    fft_magnitude,
    hilbert_envelope,
    teager_kaiser_energy,
    welch_psd,
)

CHANNEL_FEATURES = (
    "mean", "median", "std", "skewness", "kurtosis", "rms", "peak", "tkeo",
    "fft_mean", "fft_std", "fft_low", "fft_mid", "fft_high",
    "psd_sum", "psd_peak", "psd_low", "psd_mid", "psd_high",
    "env_fft_mean", "env_fft_std",
)
MIN_SEGMENT = 32
DEGENERATE_STD = 1e-12


@dataclass
class FeatureVector:
    values: np.ndarray
    names: list


@dataclass
class FeatureMatrix:
    rows: np.ndarray
    names: list
    labels: np.ndarray | None = None
    segment_meta: np.ndarray | None = None  # (n, 2): record index, segment index
    class_names: list | None = field(default=None, repr=False)

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        if self.rows.shape[1] != len(self.names):
            raise DimensionMismatch(f"{self.rows.shape[1]} columns but {len(self.names)} names")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)
            if self.labels.shape[0] != self.rows.shape[0]:
                raise DimensionMismatch("label count does not match row count")

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    def take(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx, dtype=int)
        return FeatureMatrix(
            self.rows[idx],
            list(self.names),
            None if self.labels is None else self.labels[idx],
            None if self.segment_meta is None else self.segment_meta[idx],
            self.class_names,
        )


@dataclass
class Standardizer:
    means: np.ndarray
    stds: np.ndarray

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Standardizer":
        return cls(np.asarray(d["means"], dtype=np.float64), np.asarray(d["stds"], dtype=np.float64))


def feature_names(channels: int) -> list:
    return [f"{feat}@{c + 1}" for c in range(channels) for feat in CHANNEL_FEATURES]


def _band_sums(freqs, values, fs):
    # bin-boundary ties go to the lower band
    low = freqs <= fs / 6
    mid = (freqs > fs / 6) & (freqs <= fs / 3)
    high = freqs > fs / 3
    return values[low].sum(), values[mid].sum(), values[high].sum()


def channel_features(x: np.ndarray, fs: float) -> list:
    mean = x.mean()
    centered = x - mean
    var = np.mean(centered**2)
    std = np.sqrt(var)
    # rounding in the mean leaves ~1e-17 residue on constant channels
    if std > DEGENERATE_STD * max(1.0, abs(mean)):
        skew = np.mean(centered**3) / std**3
        kurt = np.mean(centered**4) / var**2
    else:
        skew = kurt = 0.0
    rms = np.sqrt(np.mean(x**2))
    peak = np.abs(x).max()
    tkeo = teager_kaiser_energy(x)

    spec = fft_magnitude(x, fs)
    fft_bands = _band_sums(spec.freqs_hz, spec.magnitudes, fs)
    psd = welch_psd(x, fs, default_subsegment_len(x.size))
    psd_bands = _band_sums(psd.freqs_hz, psd.power, fs)
    env_mag = fft_magnitude(hilbert_envelope(x), fs).magnitudes

    return [
        mean, np.median(x), std, skew, kurt, rms, peak, tkeo,
        spec.magnitudes.mean(), spec.magnitudes.std(), *fft_bands,
        psd.power.sum(), psd.power.max(), *psd_bands,
        env_mag.mean(), env_mag.std(),
    ]


def extract_segment_features(segment, sample_rate_hz: float) -> FeatureVector:
    """The 20 per-channel features of one segment, channel-major."""
    seg = np.asarray(segment, dtype=np.float64)
    if seg.ndim == 1:
        seg = seg[:, None]
    if seg.shape[0] < MIN_SEGMENT:
        raise TooShort(f"segment needs at least {MIN_SEGMENT} samples, got {seg.shape[0]}")
    if not np.all(np.isfinite(seg)):
        raise NonFinite("segment contains NaN or infinite samples")
    values = np.array(
        [v for c in range(seg.shape[1]) for v in channel_features(seg[:, c], sample_rate_hz)],
        dtype=np.float64,
    )
    return FeatureVector(values, feature_names(seg.shape[1]))


def extract_all(manifest, params) -> FeatureMatrix:
    """Feature rows for every segment of every record, record-major."""
    rows, labels, meta = [], [], []
    names = None
    for r, rec in enumerate(manifest.records):
        for s, seg in enumerate(segment_signal(rec, params.window, params.step)):
            fv = extract_segment_features(seg, rec.sample_rate_hz)
            if names is None:
                names = fv.names
            elif fv.names != names:
                raise DimensionMismatch(f"record {r} has a different channel count")
            rows.append(fv.values)
            labels.append(rec.label)
            meta.append((r, s))
    return FeatureMatrix(
        np.vstack(rows),
        names,
        np.array(labels, dtype=int),
        np.array(meta, dtype=int),
        list(manifest.class_names),
    )


def _rows_of(matrix):
    return matrix.rows if isinstance(matrix, FeatureMatrix) else np.atleast_2d(np.asarray(matrix, dtype=np.float64))


def standardize_fit(matrix, fit_rows=None) -> Standardizer:
    """Per-column mean and population std over ``fit_rows`` (all rows if None)."""
    x = _rows_of(matrix)
    if fit_rows is not None:
        x = x[np.asarray(fit_rows, dtype=int)]
    if x.shape[0] == 0:
        raise EmptyFitSet("standardizer needs at least one row")
    return Standardizer(x.mean(axis=0), x.std(axis=0))


def standardize_apply(matrix, s: Standardizer):
    x = _rows_of(matrix)
    if x.shape[1] != s.means.shape[0]:
        raise DimensionMismatch(f"matrix has {x.shape[1]} columns, standardizer {s.means.shape[0]}")
    ok = s.stds >= DEGENERATE_STD
    z = np.zeros_like(x)
    z[:, ok] = (x[:, ok] - s.means[ok]) / s.stds[ok]
    if isinstance(matrix, FeatureMatrix):
        return FeatureMatrix(z, list(matrix.names), matrix.labels, matrix.segment_meta, matrix.class_names)
    return z


def write_feature_csv(matrix: FeatureMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        has_labels = matrix.labels is not None
        w.writerow(list(matrix.names) + (["label"] if has_labels else []))
        for i, row in enumerate(matrix.rows):
            cells = [format(v, ".17g") for v in row]
            if has_labels:
                cells.append(str(int(matrix.labels[i])))
            w.writerow(cells)


def read_feature_csv(path) -> FeatureMatrix:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        body = [row for row in reader if row]
    if not header:
        raise DataError(f"{path}: empty feature CSV")
    if any(len(row) != len(header) for row in body):
        raise DataError(f"{path}: ragged rows (header has {len(header)} columns)")
    try:
        data = np.array(body, dtype=np.float64) if body else np.empty((0, len(header)))
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric cell ({exc})") from None
    if header and header[-1] == "label":
        return FeatureMatrix(data[:, :-1], header[:-1], data[:, -1].astype(int))
    return FeatureMatrix(data, header)
