"""Loading vibration records, synthetic bearing signals and feature noise."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DataError,
    EmptyFile,
    InvalidSpec,
    MalformedRow,
    NegativeSigma,
    NonFiniteSample,
)

RAW_SIDECAR_SUFFIX = ".meta"


@dataclass
class SignalRecord:
    """A multi-channel recording with its condition label.

    ``samples`` is always 2-D, shaped (N, channels).
    """

    samples: np.ndarray
    sample_rate_hz: float
    label: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.ndim != 2 or samples.shape[0] < 1 or samples.shape[1] < 1:
            raise DataError(f"samples must be (N, ch) with N, ch >= 1, got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise NonFiniteSample("signal contains NaN or infinite samples")
        if not self.sample_rate_hz > 0:
            raise DataError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        self.samples = samples
        self.sample_rate_hz = float(self.sample_rate_hz)
        self.label = int(self.label)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def channels(self) -> int:
        return self.samples.shape[1]


@dataclass
class DatasetManifest:
    records: list
    class_names: list

    def __post_init__(self):
        if len(set(self.class_names)) != len(self.class_names):
            raise DataError("class_names must be distinct")
        for rec in self.records:
            if not 0 <= rec.label < len(self.class_names):
                raise DataError(
                    f"record label {rec.label} does not index {len(self.class_names)} classes"
                )

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=int)


@dataclass
class SynthClass:
    name: str
    impulse_rate_hz: float
    impulse_amplitude: float
    resonance_hz: float
    decay_rate: float


@dataclass
class LoadCondition:
    """Operating condition applied on top of every class signature.

    Scales impulse amplitude and repetition rate, which is how motor load
    shows up in bearing signals.
    """

    name: str = "0"
    amplitude_scale: float = 1.0
    rate_scale: float = 1.0


@dataclass
class SynthSpec:
    classes: list
    duration_s: float = 1.0
    sample_rate_hz: float = 12000.0
    channels: int = 2
    noise_std: float = 0.3
    records_per_class: int = 2
    loads: list = field(default_factory=lambda: [LoadCondition()])

    def validate(self):
        nyq = self.sample_rate_hz / 2
        if not self.classes:
            raise InvalidSpec("synthetic spec needs at least one class")
        if self.sample_rate_hz <= 0 or self.duration_s <= 0:
            raise InvalidSpec("sample_rate_hz and duration_s must be positive")
        if self.channels < 1 or self.records_per_class < 1:
            raise InvalidSpec("channels and records_per_class must be >= 1")
        if self.noise_std < 0:
            raise InvalidSpec("noise_std must be nonnegative")
        if len({c.name for c in self.classes}) != len(self.classes):
            raise InvalidSpec("class names must be distinct")
        if not self.loads:
            raise InvalidSpec("at least one load condition is required")
        for c in self.classes:
            if c.impulse_amplitude < 0 or c.impulse_rate_hz < 0 or c.decay_rate < 0:
                raise InvalidSpec(f"class {c.name!r}: negative parameter")
            if c.impulse_amplitude > 0:
                for ld in self.loads:
                    if not 0 < c.impulse_rate_hz * ld.rate_scale < nyq:
                        raise InvalidSpec(f"class {c.name!r}: impulse rate must lie in (0, fs/2)")
                if not 0 < c.resonance_hz < nyq:
                    raise InvalidSpec(f"class {c.name!r}: resonance must lie in (0, fs/2)")


def default_synth_spec(**overrides) -> SynthSpec:
    """Healthy condition plus three fault signatures at noise = 0.3x amplitude."""
    classes = [
        SynthClass("healthy", 0.0, 0.0, 0.0, 0.0),
        SynthClass("inner_race", 162.0, 1.0, 3100.0, 900.0),
        SynthClass("outer_race", 107.0, 1.0, 2000.0, 600.0),
        SynthClass("ball", 71.0, 1.0, 4300.0, 1200.0),
    ]
    spec = SynthSpec(classes=classes)
    return dataclasses.replace(spec, **overrides)


def _parse_sidecar(path: Path) -> dict:
    text = path.read_text().replace(",", " ").split()
    out = {}
    for tok in text:
        key, sep, val = tok.partition("=")
        if not sep:
            raise DataError(f"{path}: sidecar token {tok!r} is not key=value")
        out[key.strip()] = val.strip()
    return out


def _is_numeric_row(row) -> bool:
    try:
        [float(v) for v in row]
    except ValueError:
        return False
    return True


def load_signal(path, format="csv", channels=1, sample_rate_hz=1.0, label=0, meta=None):
    """Read one recording from a csv or raw little-endian float64 file.

    CSV files may carry a single non-numeric header row. Raw files are
    channel-interleaved; when a ``<file>.meta`` sidecar is present its
    ``channels`` and ``sample_rate_hz`` override the arguments.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    meta = dict(meta or {})
    meta.setdefault("source", str(path))
    if format == "csv":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            for lineno, row in enumerate(reader, start=1):
                row = [v.strip() for v in row]
                if not row or row == [""]:
                    continue
                if lineno == 1 and not rows and not _is_numeric_row(row):
                    continue
                if len(row) != channels:
                    raise MalformedRow(f"{path}:{lineno}: expected {channels} fields, got {len(row)}")
                try:
                    rows.append([float(v) for v in row])
                except ValueError:
                    raise MalformedRow(f"{path}:{lineno}: non-numeric field in {row!r}") from None
        if not rows:
            raise EmptyFile(f"{path}: no samples")
        samples = np.array(rows, dtype=np.float64)
    elif format in ("raw", "raw-float"):
        sidecar = Path(str(path) + RAW_SIDECAR_SUFFIX)
        if sidecar.exists():
            info = _parse_sidecar(sidecar)
            channels = int(info.get("channels", channels))
            sample_rate_hz = float(info.get("sample_rate_hz", sample_rate_hz))
        data = path.read_bytes()
        if not data:
            raise EmptyFile(f"{path}: no samples")
        width = 8 * channels
        if len(data) % width:
            raise MalformedRow(f"{path}: {len(data)} bytes is not a multiple of {width}")
        samples = np.frombuffer(data, dtype="<f8").reshape(-1, channels).astype(np.float64)
    else:
        raise DataError(f"unknown signal format {format!r}")
    if not np.all(np.isfinite(samples)):
        raise NonFiniteSample(f"{path}: NaN or infinite sample")
    return SignalRecord(samples, sample_rate_hz, label, meta)


def write_signal_csv(record: SignalRecord, path) -> None:
    # 17 significant digits round-trip float64 exactly
    np.savetxt(path, record.samples, delimiter=",", fmt="%.17g")


def write_signal_raw(record: SignalRecord, path) -> None:
    path = Path(path)
    path.write_bytes(record.samples.astype("<f8").tobytes())
    Path(str(path) + RAW_SIDECAR_SUFFIX).write_text(
        f"channels={record.channels} sample_rate_hz={record.sample_rate_hz!r}\n"
    )


def _impulse_response(cls: SynthClass, fs: float, n: int) -> np.ndarray:
    if cls.decay_rate > 0:
        length = min(n, int(math.ceil(math.log(1e6) / cls.decay_rate * fs)) + 1)
    else:
        length = n
    t = np.arange(length) / fs
    return np.exp(-cls.decay_rate * t) * np.sin(2 * np.pi * cls.resonance_hz * t)


def _fault_signal(cls: SynthClass, load: LoadCondition, fs: float, n: int, rng) -> np.ndarray:
    amp = cls.impulse_amplitude * load.amplitude_scale
    if amp == 0:
        return np.zeros(n)
    period = fs / (cls.impulse_rate_hz * load.rate_scale)
    start = rng.uniform(0, period)
    idx = np.round(np.arange(start, n, period)).astype(int)
    idx = idx[idx < n]
    train = np.zeros(n)
    train[idx] = amp
    return np.convolve(train, _impulse_response(cls, fs, n))[:n]


def synth_dataset(spec: SynthSpec, seed: int) -> DatasetManifest:
    """Generate labelled impulse-train bearing signals.

    Faulty classes are a periodic impulse train (random phase per record)
    convolved with a decaying sinusoid at the class resonance; every channel
    shares that component and adds its own Gaussian noise. Healthy classes
    (zero amplitude) are noise only. Records are ordered class-major, then
    load, then repetition.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    n = int(round(spec.duration_s * spec.sample_rate_hz))
    if n < 1:
        raise InvalidSpec("duration_s * sample_rate_hz must give at least one sample")
    records = []
    for label, cls in enumerate(spec.classes):
        for load in spec.loads:
            for rep in range(spec.records_per_class):
                clean = _fault_signal(cls, load, spec.sample_rate_hz, n, rng)
                noise = rng.normal(0.0, spec.noise_std, size=(n, spec.channels))
                samples = clean[:, None] + noise
                meta = {
                    "fault_type": cls.name,
                    "load": load.name,
                    "severity": repr(cls.impulse_amplitude * load.amplitude_scale),
                    "source": f"synth/{cls.name}/load{load.name}/{rep}",
                }
                records.append(SignalRecord(samples, spec.sample_rate_hz, label, meta))
    return DatasetManifest(records, [c.name for c in spec.classes])


def write_manifest(manifest: DatasetManifest, out_dir, format="csv") -> Path:
    """Write every record plus a ``manifest.json`` index into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, rec in enumerate(manifest.records):
        ext = "csv" if format == "csv" else "f64"
        name = f"record_{i:04d}.{ext}"
        if format == "csv":
            write_signal_csv(rec, out_dir / name)
        else:
            write_signal_raw(rec, out_dir / name)
        entries.append(
            {
                "path": name,
                "label": rec.label,
                "sample_rate_hz": rec.sample_rate_hz,
                "channels": rec.channels,
                "format": format,
                "meta": {k: v for k, v in rec.meta.items() if k != "source"},
            }
        )
    doc = {"class_names": list(manifest.class_names), "records": entries}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def read_manifest(path) -> DatasetManifest:
    """Load a ``manifest.json``; record paths resolve relative to it."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such manifest")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    records = []
    for entry in doc["records"]:
        rec_path = Path(entry["path"])
        if not rec_path.is_absolute():
            rec_path = path.parent / rec_path
        records.append(
            load_signal(
                rec_path,
                format=entry.get("format", "csv"),
                channels=int(entry.get("channels", 1)),
                sample_rate_hz=float(entry["sample_rate_hz"]),
                label=int(entry["label"]),
                meta=entry.get("meta", {}),
            )
        )
    return DatasetManifest(records, list(doc["class_names"]))


def inject_feature_noise(matrix, sigma: float, seed: int):
    """Add i.i.d. N(0, sigma^2) noise to every entry of a feature matrix.

    Accepts a ``FeatureMatrix`` (returns a copy with noisy rows) or a plain
    array. ``sigma == 0`` returns the input values unchanged.
    """
    if sigma < 0:
        raise NegativeSigma(f"sigma must be nonnegative, got {sigma}")
    rows = matrix.rows if hasattr(matrix, "rows") else np.asarray(matrix, dtype=np.float64)
    if not np.all(np.isfinite(rows)):
        raise NonFiniteSample("feature matrix contains non-finite values")
    if sigma == 0:
        noisy = rows.copy()
    else:
        rng = np.random.default_rng(seed)
        noisy = rows + rng.normal(0.0, sigma, size=rows.shape)
    if hasattr(matrix, "rows"):
        return dataclasses.replace(matrix, rows=noisy)
    return noisy


def subset_records(manifest: DatasetManifest, keep: Sequence[int]) -> DatasetManifest:
    return DatasetManifest([manifest.records[i] for i in keep], list(manifest.class_names))
