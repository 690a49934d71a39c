"""End-to-end orchestration: segment, extract, graph-augment, train, evaluate.

Every stage draws its randomness from ``derive_seed(config.seed, stage)``.
Outputs land in ``config.output_dir`` and are written to a temporary name
first, then renamed into place.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PipelineConfig, derive_seed
from .errors import ConfigError, DataError, GraphFaultError
from .evaluation import (
    classification_report,
    cross_validate,
    noise_sweep,
    stratified_split,
    write_confusion_csv,
)
from .features import FeatureMatrix, extract_all, write_feature_csv
from .graph import GraphAugmenter, augment_feature_matrix, write_edges_csv
from .ingest import DatasetManifest, read_manifest, synth_dataset
from .model import model_to_dict, permutation_importance, predict, train, transfer_run
from .segmentation import SegmentationParams, optimize_window

log = logging.getLogger("graphfault")

REPORT_VERSION = 1
TIMING_KEYS = ("timing", "time", "seconds")
TRANSFER_COLUMNS = ("source", "target", "accuracy", "f1", "precision", "recall")


class StageFailure(GraphFaultError):
    """A library error tagged with the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: GraphFaultError):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineResult:
    report: dict
    outputs: dict
    matrix: FeatureMatrix
    model: object
    timings: dict = field(default_factory=dict)


class _Clock:
    def __init__(self):
        self.timings = {}

    @contextmanager
    def stage(self, name):
        log.info("stage %s", name)
        t0 = time.perf_counter()
        try:
            yield
        except StageFailure:
            raise
        except GraphFaultError as exc:
            raise StageFailure(name, exc) from exc
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0


def to_jsonable(obj):
    """Plain JSON types; NaN and infinities become null."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def strip_timing(obj):
    """Copy of a report without wall-clock entries (for determinism checks)."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k not in TIMING_KEYS}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def atomic_write(path, writer) -> Path:
    """Run ``writer(tmp_path)`` then rename the result onto ``path``."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()
    return path


def write_json(path, doc) -> Path:
    text = json.dumps(to_jsonable(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"
    return atomic_write(path, lambda p: Path(p).write_text(text))


def _write_rows(path, header, rows):
    def w(p):
        with open(p, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(header)
            for r in rows:
                out.writerow([format(v, ".17g") if isinstance(v, float) else v for v in r])

    return atomic_write(path, w)


def load_dataset(config: PipelineConfig) -> DatasetManifest:
    if config.manifest is not None:
        return read_manifest(config.manifest)
    if config.synth is not None:
        return synth_dataset(config.synth, derive_seed(config.seed, "synth"))
    raise ConfigError("config names no dataset")


def choose_segmentation(manifest: DatasetManifest, config: PipelineConfig) -> SegmentationParams:
    seg = config.segmentation
    if seg.window is not None:
        if seg.step < 1:
            raise ConfigError("[segmentation] step must be >= 1")
        return SegmentationParams(seg.window, seg.step)
    if not 0 <= seg.reference_record < len(manifest.records):
        raise ConfigError(f"[segmentation] reference_record {seg.reference_record} out of range")
    return optimize_window(manifest.records[seg.reference_record], seg.space, seg.weights, seg.max_segments)


def make_augmenter(config: PipelineConfig, stage: str = "cluster") -> GraphAugmenter:
    g = config.graph
    return GraphAugmenter(
        k_max=g.k_max,
        n_max=g.n_max,
        tau_percentile=g.tau_percentile,
        n_clusters=g.n_clusters,
        scope=g.scope,
        path_cost=g.path_cost,
        batch_size=g.batch_size,
        max_iters=g.max_iters,
        seed=derive_seed(config.seed, stage),
    )


def augment_split(augmenter: GraphAugmenter, matrix: FeatureMatrix, fit_idx, other_idx=None):
    """Fit the graph stage on ``fit_idx`` rows; return augmented (fit, other) rows.

    Fitted rows keep their own subgraph; other rows are routed through
    ``map_rows``. Base features are returned unstandardized.
    """
    x, y = matrix.rows, matrix.labels
    augmenter.fit(x[fit_idx], y[fit_idx])
    a = augment_feature_matrix(x[fit_idx], augmenter.metrics_, augmenter.fit_mapping_, augmenter.scope)
    if other_idx is None:
        return a, None
    b = augment_feature_matrix(x[other_idx], augmenter.metrics_, augmenter.map_rows(x[other_idx]), augmenter.scope)
    return a, b


def record_groups(matrix: FeatureMatrix, manifest: DatasetManifest, key: str) -> np.ndarray:
    """Per-row value of ``meta[key]`` of the record the row came from."""
    values = []
    for r in range(len(manifest.records)):
        meta = manifest.records[r].meta or {}
        if key not in meta:
            raise DataError(f"record {r} has no {key!r} metadata for grouping")
        values.append(str(meta[key]))
    return np.array([values[r] for r in matrix.segment_meta[:, 0]])


def cross_eval(matrix: FeatureMatrix, manifest: DatasetManifest, config: PipelineConfig, pairs=None) -> list:
    """Source-to-target transfer rows with weighted precision/recall/F1.

    The graph stage is fit on source rows only; target rows are mapped onto
    the source subgraphs.
    """
    ev = config.eval
    pairs = list(pairs if pairs is not None else ev.transfer_pairs)
    groups = record_groups(matrix, manifest, ev.group_key)
    names = list(matrix.names) + ["graph_L", "graph_Q", "graph_gap"]
    rows = []
    for src, dst in pairs:
        s_idx = np.flatnonzero(groups == src)
        t_idx = np.flatnonzero(groups == dst)
        for name, idx in ((src, s_idx), (dst, t_idx)):
            if idx.size == 0:
                raise DataError(f"no rows with {ev.group_key}={name!r}")
        aug = make_augmenter(config, f"cross:{src}->{dst}")
        a, b = augment_split(aug, matrix, s_idx, t_idx)
        source = FeatureMatrix(a, names, matrix.labels[s_idx])
        target = FeatureMatrix(b, names, matrix.labels[t_idx])
        rep = transfer_run(source, target, config.model, ev.transfer_mode, ev.test_fraction,
                           derive_seed(config.seed, f"transfer:{src}->{dst}"))
        rows.append(
            {
                "source": src,
                "target": dst,
                "accuracy": rep.accuracy,
                "f1": rep.weighted_f1,
                "precision": rep.weighted_precision,
                "recall": rep.weighted_recall,
            }
        )
    return rows


def write_transfer_csv(rows, path) -> Path:
    return _write_rows(path, TRANSFER_COLUMNS, [[r[c] for c in TRANSFER_COLUMNS] for r in rows])


def _strict_prepare(config, matrix):
    def prepare(tr, te):
        aug = make_augmenter(config, "cv-cluster")
        return augment_split(aug, matrix, tr, te)

    return prepare


def _config_summary(config: PipelineConfig) -> dict:
    return {
        "seed": config.seed,
        "dataset": "manifest" if config.manifest is not None else "synth",
        "graph": {
            "k_max": config.graph.k_max,
            "n_max": config.graph.n_max,
            "tau_percentile": config.graph.tau_percentile,
            "n_clusters": config.graph.n_clusters,
            "scope": config.graph.scope,
            "leakage": config.graph.leakage,
            "path_cost": config.graph.path_cost,
        },
        "model": config.model.to_dict(),
        "eval": {
            "test_fraction": config.eval.test_fraction,
            "folds": config.eval.folds,
            "sigmas": list(config.eval.sigmas),
            "noise_sweep": config.eval.noise_sweep,
            "transfer_mode": config.eval.transfer_mode,
        },
    }


def run_pipeline(config: PipelineConfig, manifest: DatasetManifest | None = None) -> PipelineResult:
    """Run every stage and write the report files.

    Raises :class:`StageFailure` (wrapping the library error) on failure.
    """
    clock = _Clock()
    seed = config.seed
    out = Path(config.output_dir)
    with clock.stage("load"):
        if manifest is None:
            manifest = load_dataset(config)
        out.mkdir(parents=True, exist_ok=True)

    with clock.stage("segmentation"):
        params = choose_segmentation(manifest, config)
    log.info("window %d step %d", params.window, params.step)

    with clock.stage("extraction"):
        base = extract_all(manifest, params)
    y = base.labels
    classes = np.arange(len(manifest.class_names))

    with clock.stage("split"):
        tr, te = stratified_split(y, config.eval.test_fraction, derive_seed(seed, "split"))

    strict = config.graph.leakage == "strict"
    with clock.stage("graph"):
        augmenter = make_augmenter(config)
        if strict:
            a, b = augment_split(augmenter, base, tr, te)
            rows = np.empty((base.n_rows, a.shape[1]))
            rows[tr], rows[te] = a, b
        else:
            rows, _ = augment_split(augmenter, base, np.arange(base.n_rows))
        matrix = FeatureMatrix(rows, list(base.names) + ["graph_L", "graph_Q", "graph_gap"], y,
                               base.segment_meta, base.class_names)
    metrics = augmenter.metrics_

    with clock.stage("train"):
        model = train(matrix.rows[tr], y[tr], config.model, classes=classes)
        model.feature_names = list(matrix.names)

    with clock.stage("inference"):
        pred = predict(model, matrix.rows[te])
    with clock.stage("evaluate"):
        report = classification_report(y[te], pred.labels, classes=classes)
        prepare = _strict_prepare(config, base) if strict else None
        cv = cross_validate(matrix, None, config.model, config.eval.folds, derive_seed(seed, "cv"), prepare)
        report.cv_mean, report.cv_std = cv["cv_mean"], cv["cv_std"]
        report.mode = {"leakage": config.graph.leakage, "scope": config.graph.scope,
                       "path_cost": config.graph.path_cost}
        report.flags = list(report.flags) + list(metrics.flags)

    importance = []
    if config.eval.importance_repeats > 0:
        with clock.stage("importance"):
            importance = permutation_importance(model, matrix.rows[te], y[te], config.eval.importance_repeats,
                                                derive_seed(seed, "importance"))

    sweep = []
    if config.eval.noise_sweep:
        with clock.stage("noise_sweep"):
            sweep = noise_sweep(matrix, None, config.model, config.eval.sigmas, config.eval.folds,
                                derive_seed(seed, "noise"))

    transfer = []
    if config.eval.transfer_pairs:
        with clock.stage("transfer"):
            transfer = cross_eval(base, manifest, config)

    report.timing = dict(clock.timings)
    doc = {
        "version": REPORT_VERSION,
        "config": _config_summary(config),
        "dataset": {
            "n_records": len(manifest.records),
            "n_rows": base.n_rows,
            "n_features": len(base.names),
            "n_augmented": len(matrix.names),
            "class_names": list(manifest.class_names),
            "n_train": int(tr.size),
            "n_test": int(te.size),
        },
        "segmentation": {
            "window": params.window,
            "step": params.step,
            "score": params.score,
            "grid": [{"window": w, "step": s, "J": j} for w, s, j in params.grid],
        },
        "graph": metrics.to_dict(),
        "evaluation": report.to_dict(),
        "cv": {"cv_mean": cv["cv_mean"], "cv_std": cv["cv_std"],
               "fold_accuracies": [f.accuracy for f in cv["folds"]]},
        "importance": [{"feature": n, "drop": d} for n, d in importance],
        "noise_sweep": [{"sigma": s, "cv_mean": m, "cv_std": sd} for s, m, sd in sweep],
        "transfer": transfer,
    }

    with clock.stage("write"):
        outputs = {
            "features": atomic_write(out / "features.csv", lambda p: write_feature_csv(matrix, p)),
            "edges": atomic_write(out / "edges.csv", lambda p: write_edges_csv(augmenter.subgraphs_, p)),
            "model": write_json(out / "model.json", model_to_dict(model)),
            "confusion": atomic_write(out / "confusion.csv",
                                      lambda p: write_confusion_csv(report, p, list(manifest.class_names))),
        }
        if importance:
            outputs["importance"] = _write_rows(out / "importance.csv", ["feature", "drop"], importance)
        if sweep:
            outputs["noise_sweep"] = _write_rows(out / "noise_sweep.csv", ["sigma", "cv_mean", "cv_std"], sweep)
        if transfer:
            outputs["transfer"] = write_transfer_csv(transfer, out / "transfer.csv")
        if config.figures:
            outputs.update(render_figures(out, report, manifest.class_names, params, importance, sweep, transfer))

    doc["timing"] = dict(clock.timings)
    doc["evaluation"]["timing"] = dict(clock.timings)
    outputs["timings"] = write_json(out / "timings.json", clock.timings)
    outputs["report"] = write_json(out / "report.json", doc)
    return PipelineResult(to_jsonable(doc), outputs, matrix, model, dict(clock.timings))


def render_figures(out: Path, report, class_names, params, importance=(), sweep=(), transfer=()) -> dict:
    from . import plotting

    figs = {"confusion_png": atomic_write(
        out / "confusion.png", lambda p: plotting.plot_confusion(report.confusion, list(class_names), p))}
    if params.grid:
        best = (params.window, params.step, params.score)
        figs["window_search_png"] = atomic_write(
            out / "window_search.png", lambda p: plotting.plot_window_search(params.grid, best, p))
    if importance:
        figs["importance_png"] = atomic_write(out / "importance.png",
                                              lambda p: plotting.plot_importance(list(importance), p))
    if sweep:
        figs["noise_sweep_png"] = atomic_write(out / "noise_sweep.png", lambda p: plotting.plot_noise_sweep(sweep, p))
    if transfer:
        figs["transfer_png"] = atomic_write(out / "transfer.png",
                                            lambda p: plotting.plot_transfer_matrix(transfer, p))
    return figs


def report_schema_path() -> Path:
    return Path(__file__).parent / "data" / "report.schema.json"
