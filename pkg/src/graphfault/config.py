"""INI pipeline configuration and per-stage seed derivation.

Grammar (``configparser``, ``key = value`` under bracketed sections)::

    [pipeline]      seed (required), output_dir, figures
    [dataset]       manifest = path/to/manifest.json   | synth = true
    [synth]         sample_rate_hz, duration_s, channels, noise_std,
                    records_per_class
    [class:NAME]    impulse_rate_hz, impulse_amplitude, resonance_hz,
                    decay_rate      (one section per synthetic class, in order)
    [load:NAME]     amplitude_scale, rate_scale   (optional synthetic loads)
    [segmentation]  windows, overlaps, alpha, alpha_t, alpha_s,
                    window + step (fixed, skips the search),
                    reference_record, max_segments
    [graph]         k_max, n_max, tau_percentile, n_clusters (int|auto),
                    scope (subgraph|global), leakage (faithful|strict),
                    path_cost (similarity|distance), batch_size, max_iters
    [model]         kind, lambda, epochs, learning_rate, trees,
                    max_depth (int|none), min_leaf, features_per_split
    [eval]          test_fraction, folds, sigmas, noise_sweep,
                    importance_repeats, group_key, transfer_pairs,
                    transfer_mode

Lists are comma separated. ``transfer_pairs`` is a comma separated list of
``source->target`` values of the ``group_key`` record metadata field.
Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .graph import LEAKAGE_MODES, PATH_COSTS, SCOPES
from .ingest import LoadCondition, SynthClass, SynthSpec, default_synth_spec
from .model import TrainConfig
from .segmentation import EntropyWeights, SearchSpace


def derive_seed(master: int, stage: str) -> int:
    """Stage seed: first 8 bytes of sha256("<master>:<stage>")."""
    digest = hashlib.sha256(f"{int(master)}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & ((1 << 63) - 1)


@dataclass
class GraphConfig:
    k_max: int = 5
    n_max: int = 200
    tau_percentile: float = 95.0
    n_clusters: int | None = None
    scope: str = "subgraph"
    leakage: str = "faithful"
    path_cost: str = "similarity"
    batch_size: int = 256
    max_iters: int = 100

    def __post_init__(self):
        if self.scope not in SCOPES:
            raise ConfigError(f"[graph] scope must be one of {SCOPES}")
        if self.leakage not in LEAKAGE_MODES:
            raise ConfigError(f"[graph] leakage must be one of {LEAKAGE_MODES}")
        if self.path_cost not in PATH_COSTS:
            raise ConfigError(f"[graph] path_cost must be one of {PATH_COSTS}")
        if self.k_max < 1 or self.n_max < 2:
            raise ConfigError("[graph] k_max must be >= 1 and n_max >= 2")


@dataclass
class EvalConfig:
    test_fraction: float = 0.3
    folds: int = 5
    sigmas: tuple = (0.0, 0.05, 0.1, 0.2, 0.5)
    noise_sweep: bool = False
    importance_repeats: int = 5
    group_key: str = "load"
    transfer_pairs: tuple = ()
    transfer_mode: str = "zero_shot"


@dataclass
class SegmentationConfig:
    space: SearchSpace = field(default_factory=SearchSpace)
    weights: EntropyWeights = field(default_factory=EntropyWeights)
    window: int | None = None
    step: int | None = None
    reference_record: int = 0
    max_segments: int | None = None


@dataclass
class PipelineConfig:
    seed: int
    output_dir: Path = Path("out")
    figures: bool = True
    manifest: Path | None = None
    synth: SynthSpec | None = None
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    model: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    source: Path | None = None


def _ints(text):
    return tuple(int(v) for v in text.replace(" ", "").split(",") if v)


def _floats(text):
    return tuple(float(v) for v in text.replace(" ", "").split(",") if v)


def _opt_int(text):
    return None if text.strip().lower() in ("", "none", "auto") else int(text)


def parse_pairs(text):
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        src, sep, dst = item.partition("->")
        if not sep:
            raise ConfigError(f"transfer pair {item!r} must look like source->target")
        out.append((src.strip(), dst.strip()))
    return tuple(out)


def _section(cp, name):
    return cp[name] if cp.has_section(name) else {}


def _get(sec, key, conv, default):
    if key not in sec:
        return default
    try:
        return conv(sec[key])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for {key!r}: {sec[key]!r} ({exc})") from None


def _bool(text):
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _parse_synth(cp) -> SynthSpec:
    sec = _section(cp, "synth")
    base = default_synth_spec()
    classes = []
    for name in cp.sections():
        if name.startswith("class:"):
            s = cp[name]
            classes.append(
                SynthClass(
                    name[len("class:"):],
                    _get(s, "impulse_rate_hz", float, 0.0),
                    _get(s, "impulse_amplitude", float, 0.0),
                    _get(s, "resonance_hz", float, 0.0),
                    _get(s, "decay_rate", float, 0.0),
                )
            )
    loads = [
        LoadCondition(name[len("load:"):], _get(cp[name], "amplitude_scale", float, 1.0),
                      _get(cp[name], "rate_scale", float, 1.0))
        for name in cp.sections()
        if name.startswith("load:")
    ]
    spec = SynthSpec(
        classes=classes or base.classes,
        duration_s=_get(sec, "duration_s", float, base.duration_s),
        sample_rate_hz=_get(sec, "sample_rate_hz", float, base.sample_rate_hz),
        channels=_get(sec, "channels", int, base.channels),
        noise_std=_get(sec, "noise_std", float, base.noise_std),
        records_per_class=_get(sec, "records_per_class", int, base.records_per_class),
        loads=loads or base.loads,
    )
    spec.validate()
    return spec


def parse_config(text: str, base_dir: Path | None = None, source: Path | None = None) -> PipelineConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    base_dir = base_dir or Path.cwd()
    pipe = _section(cp, "pipeline")
    if "seed" not in pipe:
        raise ConfigError("[pipeline] seed is required")
    seed = _get(pipe, "seed", int, 0)
    out = Path(pipe.get("output_dir", "out"))
    if not out.is_absolute():
        out = base_dir / out

    ds = _section(cp, "dataset")
    manifest = synth = None
    if "manifest" in ds:
        manifest = Path(ds["manifest"])
        if not manifest.is_absolute():
            manifest = base_dir / manifest
        if not manifest.exists():
            raise ConfigError(f"[dataset] manifest not found: {manifest}")
    elif _get(ds, "synth", _bool, False) or cp.has_section("synth"):
        synth = _parse_synth(cp)
    else:
        raise ConfigError("[dataset] needs either manifest = <path> or synth = true")

    seg = _section(cp, "segmentation")
    space = SearchSpace(
        _get(seg, "windows", _ints, SearchSpace().window_sizes),
        _get(seg, "overlaps", _floats, SearchSpace().overlap_ratios),
    )
    weights = EntropyWeights(
        _get(seg, "alpha", float, 0.5), _get(seg, "alpha_t", float, 0.5), _get(seg, "alpha_s", float, 0.5)
    )
    segc = SegmentationConfig(
        space,
        weights,
        _get(seg, "window", _opt_int, None),
        _get(seg, "step", _opt_int, None),
        _get(seg, "reference_record", int, 0),
        _get(seg, "max_segments", _opt_int, None),
    )
    if (segc.window is None) != (segc.step is None):
        raise ConfigError("[segmentation] window and step must be given together")

    g = _section(cp, "graph")
    graph = GraphConfig(
        _get(g, "k_max", int, 5),
        _get(g, "n_max", int, 200),
        _get(g, "tau_percentile", float, 95.0),
        _get(g, "n_clusters", _opt_int, None),
        g.get("scope", "subgraph"),
        g.get("leakage", "faithful"),
        g.get("path_cost", "similarity"),
        _get(g, "batch_size", int, 256),
        _get(g, "max_iters", int, 100),
    )

    m = _section(cp, "model")
    fps = m.get("features_per_split", "sqrt")
    model = TrainConfig(
        kind=m.get("kind", "random_forest"),
        lam=_get(m, "lambda", float, 1e-3),
        epochs=_get(m, "epochs", int, 500),
        learning_rate=_get(m, "learning_rate", float, 0.1),
        trees=_get(m, "trees", int, 100),
        max_depth=_get(m, "max_depth", _opt_int, None),
        min_leaf=_get(m, "min_leaf", int, 1),
        features_per_split=fps if fps in ("sqrt", "all") else int(fps),
        seed=derive_seed(seed, "model"),
    )

    e = _section(cp, "eval")
    ev = EvalConfig(
        _get(e, "test_fraction", float, 0.3),
        _get(e, "folds", int, 5),
        _get(e, "sigmas", _floats, (0.0, 0.05, 0.1, 0.2, 0.5)),
        _get(e, "noise_sweep", _bool, False),
        _get(e, "importance_repeats", int, 5),
        e.get("group_key", "load"),
        _get(e, "transfer_pairs", parse_pairs, ()),
        e.get("transfer_mode", "zero_shot"),
    )
    return PipelineConfig(seed, out, _get(pipe, "figures", _bool, True), manifest, synth, segc, graph, model, ev,
                          source)


BUNDLED_PREFIX = "bundled:"


def bundled_config_path(name: str) -> Path:
    """Path of a config shipped in the package ``data`` directory."""
    path = Path(__file__).parent / "data" / f"{name}.ini"
    if not path.exists():
        raise ConfigError(f"no bundled config named {name!r}")
    return path


def load_config(path) -> PipelineConfig:
    """Read an INI file, or ``bundled:NAME`` for a shipped config.

    Relative paths in a bundled config resolve against the working directory.
    """
    if str(path).startswith(BUNDLED_PREFIX):
        src = bundled_config_path(str(path)[len(BUNDLED_PREFIX):])
        return parse_config(src.read_text(), base_dir=Path.cwd(), source=src)
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), base_dir=path.parent, source=path)
