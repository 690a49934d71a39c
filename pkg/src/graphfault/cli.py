"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure. Errors print one line to stderr naming the failing stage.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import minibatch_kmeans
from .config import derive_seed, load_config, parse_pairs
from .errors import ConfigError, DataError, GraphFaultError, NumericError
from .evaluation import classification_report, cross_validate, noise_sweep, write_confusion_csv
from .features import FeatureMatrix, extract_all, read_feature_csv, standardize_apply, standardize_fit, write_feature_csv
from .graph import LEAKAGE_MODES, PATH_COSTS, SCOPES, GraphAugmenter, augment_feature_matrix, write_edges_csv
from .ingest import default_synth_spec, read_manifest, synth_dataset, write_manifest
from .model import KINDS as MODEL_KINDS, TrainConfig, load_model, permutation_importance, predict, save_model, train
from .pipeline import (
    StageFailure,
    atomic_write,
    choose_segmentation,
    cross_eval,
    load_dataset,
    record_groups,
    run_pipeline,
    write_json,
    write_transfer_csv,
    _write_rows,
)
from .segmentation import EntropyWeights, SearchSpace, SegmentationParams, optimize_window

log = logging.getLogger("graphfault")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageFailure):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    return EXIT_DATA


def _csv_ints(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None


def _csv_floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def _existing(path):
    p = Path(path)
    if not p.exists():
        raise DataError(f"{p}: no such file")
    return p


def _emit(doc, out):
    if out:
        write_json(out, doc)
    else:
        json.dump(doc, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")


def _features(path) -> FeatureMatrix:
    m = read_feature_csv(_existing(path))
    if m.labels is None:
        raise DataError(f"{path}: feature CSV has no label column")
    return m


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        kind=args.kind,
        lam=args.lam,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        trees=args.trees,
        max_depth=args.max_depth,
        seed=derive_seed(args.seed, "model"),
    )


def _add_model_flags(p):
    p.add_argument("--kind", choices=MODEL_KINDS, default="random_forest", help="classifier (default random_forest)")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-3, help="L2 strength for linear models")
    p.add_argument("--epochs", type=int, default=500, help="epochs for linear models")
    p.add_argument("--learning-rate", type=float, default=0.1, help="step size for linear models")
    p.add_argument("--trees", type=int, default=100, help="forest size")
    p.add_argument("--max-depth", type=int, default=None, help="forest depth limit (default unlimited)")


def _add_graph_flags(p):
    p.add_argument("--k-max", type=int, default=5, help="neighbours per node")
    p.add_argument("--n-max", type=int, default=200, help="maximum subgraph size")
    p.add_argument("--tau-percentile", type=float, default=95.0, help="edge distance percentile cut")
    p.add_argument("--n-clusters", type=int, default=None, help="k-means clusters (default from n-max)")
    p.add_argument("--scope", choices=SCOPES, default="subgraph", help="metric scope for augmentation")
    p.add_argument("--path-cost", choices=PATH_COSTS, default="similarity", help="edge cost for shortest paths")


# subcommands

def cmd_synth(args):
    spec = default_synth_spec()
    if args.config:
        cfg = load_config(args.config)
        spec = cfg.synth or spec
    overrides = {k: v for k, v in (("records_per_class", args.records_per_class), ("noise_std", args.noise_std),
                                   ("duration_s", args.duration)) if v is not None}
    spec = replace(spec, **overrides)
    manifest = synth_dataset(spec, derive_seed(args.seed, "synth"))
    path = write_manifest(manifest, args.out_dir, args.format)
    print(path)


def cmd_optimize_window(args):
    manifest = read_manifest(_existing(args.manifest))
    if not 0 <= args.record < len(manifest.records):
        raise ConfigError(f"--record {args.record} out of range")
    space = SearchSpace(args.windows or SearchSpace().window_sizes, args.overlaps or SearchSpace().overlap_ratios)
    params = optimize_window(manifest.records[args.record], space, EntropyWeights(args.alpha, args.alpha_t,
                                                                                   args.alpha_s), args.max_segments)
    _emit({"window": params.window, "step": params.step, "score": params.score,
           "grid": [{"window": w, "step": s, "J": j} for w, s, j in params.grid]}, args.out)


def cmd_extract(args):
    manifest = read_manifest(_existing(args.manifest))
    if (args.window is None) != (args.step is None):
        raise ConfigError("--window and --step go together")
    if args.window is None:
        params = optimize_window(manifest.records[0])
    else:
        params = SegmentationParams(args.window, args.step)
    m = extract_all(manifest, params)
    atomic_write(args.out, lambda p: write_feature_csv(m, p))
    log.info("%d rows x %d features (window %d, step %d)", m.n_rows, len(m.names), params.window, params.step)


def cmd_cluster(args):
    m = _features(args.features)
    xs = standardize_apply(m.rows, standardize_fit(m.rows))
    k = args.n_clusters or max(2, int(np.ceil(m.n_rows / (2 * args.n_max))))
    cm = minibatch_kmeans(xs, k, args.batch_size, args.max_iters, derive_seed(args.seed, "cluster"))
    _write_rows(args.out, ["row", "cluster"], [(i, int(c)) for i, c in enumerate(cm.assignments)])
    log.info("%d clusters, inertia %.6g", k, cm.inertia)


def _augmenter(args, stage="cluster"):
    return GraphAugmenter(args.k_max, args.n_max, args.tau_percentile, args.n_clusters, args.scope, args.path_cost,
                          seed=derive_seed(args.seed, stage))


def cmd_graph(args):
    m = _features(args.features)
    aug = _augmenter(args).fit(m.rows, m.labels)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    z = augment_feature_matrix(m, aug.metrics_, aug.fit_mapping_, aug.scope)
    atomic_write(out / "features_augmented.csv", lambda p: write_feature_csv(z, p))
    atomic_write(out / "edges.csv", lambda p: write_edges_csv(aug.subgraphs_, p))
    write_json(out / "graph.json", aug.metrics_.to_dict())


def cmd_train(args):
    m = _features(args.features)
    model = train(m, None, _train_config(args))
    atomic_write(args.out, lambda p: save_model(model, p))


def cmd_evaluate(args):
    m = _features(args.features)
    if not args.model:
        cv = cross_validate(m, None, _train_config(args), args.folds, derive_seed(args.seed, "cv"))
        _emit({"cv_mean": cv["cv_mean"], "cv_std": cv["cv_std"],
               "folds": [f.to_dict() for f in cv["folds"]]}, args.out)
        return
    model = load_model(_existing(args.model))
    if list(model.feature_names) != list(m.names):
        raise DataError("feature columns differ from the ones the model was trained on")
    rep = classification_report(m.labels, predict(model, m).labels, classes=model.classes)
    if args.confusion:
        atomic_write(args.confusion, lambda p: write_confusion_csv(rep, p))
    _emit(rep.to_dict(), args.out)


def cmd_cross_eval(args):
    cfg = load_config(args.config)
    cfg.seed = args.seed if args.seed is not None else cfg.seed
    manifest = load_dataset(cfg)
    params = choose_segmentation(manifest, cfg)
    base = extract_all(manifest, params)
    pairs = cfg.eval.transfer_pairs
    if args.pairs:
        pairs = parse_pairs(args.pairs)
    if args.mode:
        cfg.eval.transfer_mode = args.mode
    if args.group_key:
        cfg.eval.group_key = args.group_key
    if not pairs:
        values = sorted(set(record_groups(base, manifest, cfg.eval.group_key)))
        pairs = [(s, t) for s in values for t in values]
    rows = cross_eval(base, manifest, cfg, pairs)
    write_transfer_csv(rows, args.out)
    if args.figure:
        from .plotting import plot_transfer_matrix

        atomic_write(args.figure, lambda p: plot_transfer_matrix(rows, p))


def cmd_noise_sweep(args):
    m = _features(args.features)
    rows = noise_sweep(m, None, _train_config(args), args.sigmas, args.folds, derive_seed(args.seed, "noise"))
    _write_rows(args.out, ["sigma", "cv_mean", "cv_std"], rows)
    if args.figure:
        from .plotting import plot_noise_sweep

        atomic_write(args.figure, lambda p: plot_noise_sweep(rows, p))


def cmd_importance(args):
    m = _features(args.features)
    model = load_model(_existing(args.model))
    imp = permutation_importance(model, m, None, args.repeats, derive_seed(args.seed, "importance"))
    _write_rows(args.out, ["feature", "drop"], imp)
    if args.figure:
        from .plotting import plot_importance

        atomic_write(args.figure, lambda p: plot_importance(imp, p))


def cmd_pipeline(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.model.seed = derive_seed(args.seed, "model")
    if args.output_dir:
        cfg.output_dir = Path(args.output_dir)
    if args.leakage:
        cfg.graph.leakage = args.leakage
    if args.no_figures:
        cfg.figures = False
    result = run_pipeline(cfg)
    ev = result.report["evaluation"]
    print(f"accuracy {ev['accuracy']:.4f}  cv {ev['cv_mean']:.4f} +/- {ev['cv_std']:.4f}  "
          f"report {result.outputs['report']}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphfault", description="Graph-augmented vibration fault diagnosis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--seed", type=int, default=0 if name not in ("pipeline", "cross-eval") else None,
                       help="master seed (pipeline/cross-eval: overrides the config seed)")
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "write a synthetic bearing dataset and its manifest")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--config", help="INI config whose [synth]/[class:*]/[load:*] sections to use")
    p.add_argument("--records-per-class", type=int, help="records per class and load")
    p.add_argument("--noise-std", type=float, help="additive Gaussian noise std")
    p.add_argument("--duration", type=float, help="record length in seconds")
    p.add_argument("--format", choices=("csv", "raw"), default="csv", help="record file format")

    p = add("optimize-window", cmd_optimize_window, "entropy grid search for window size and step")
    p.add_argument("--manifest", required=True, help="dataset manifest.json")
    p.add_argument("--record", type=int, default=0, help="record index to search on")
    p.add_argument("--windows", type=_csv_ints, help="candidate windows, e.g. 256,512,1024")
    p.add_argument("--overlaps", type=_csv_floats, help="candidate overlap ratios, e.g. 0,0.5")
    p.add_argument("--alpha", type=float, default=0.5, help="time/frequency weight")
    p.add_argument("--alpha-t", type=float, default=0.5, help="amplitude/envelope weight")
    p.add_argument("--alpha-s", type=float, default=0.5, help="spectral/envelope-spectral weight")
    p.add_argument("--max-segments", type=int, help="score at most this many evenly spaced segments")
    p.add_argument("--out", help="JSON output path (default stdout)")

    p = add("extract", cmd_extract, "segment every record and write the feature CSV")
    p.add_argument("--manifest", required=True, help="dataset manifest.json")
    p.add_argument("--window", type=int, help="fixed window (default: optimize on record 0)")
    p.add_argument("--step", type=int, help="fixed step")
    p.add_argument("--out", required=True, help="feature CSV path")

    p = add("cluster", cmd_cluster, "mini-batch k-means on standardized features")
    p.add_argument("--features", required=True, help="feature CSV")
    p.add_argument("--n-clusters", type=int, help="cluster count (default from --n-max)")
    p.add_argument("--n-max", type=int, default=200, help="maximum subgraph size used for the default count")
    p.add_argument("--batch-size", type=int, default=256, help="mini-batch size")
    p.add_argument("--max-iters", type=int, default=100, help="iteration cap")
    p.add_argument("--out", required=True, help="assignment CSV path")

    p = add("graph", cmd_graph, "build kNN subgraphs, compute metrics and augment features")
    p.add_argument("--features", required=True, help="feature CSV")
    _add_graph_flags(p)
    p.add_argument("--out-dir", required=True, help="directory for features_augmented.csv, edges.csv, graph.json")

    p = add("train", cmd_train, "train a classifier on a feature CSV")
    p.add_argument("--features", required=True, help="feature CSV")
    _add_model_flags(p)
    p.add_argument("--out", required=True, help="model JSON path")

    p = add("evaluate", cmd_evaluate, "score a saved model, or cross-validate when no model is given")
    p.add_argument("--features", required=True, help="feature CSV")
    p.add_argument("--model", help="model JSON (omit to cross-validate)")
    p.add_argument("--folds", type=int, default=5, help="cross-validation folds")
    _add_model_flags(p)
    p.add_argument("--confusion", help="confusion matrix CSV path")
    p.add_argument("--out", help="JSON report path (default stdout)")

    p = add("cross-eval", cmd_cross_eval, "source-to-target transfer matrix from a config")
    p.add_argument("--config", required=True, help="pipeline INI config, or bundled:NAME (synth_default, synth_loads)")
    p.add_argument("--pairs", help="source->target list (default: config pairs, else all ordered pairs)")
    p.add_argument("--group-key", help="record metadata field that names the domain")
    p.add_argument("--mode", choices=("zero_shot", "augmented_refit"), help="transfer protocol")
    p.add_argument("--out", required=True, help="CSV path (source,target,accuracy,f1,precision,recall)")
    p.add_argument("--figure", help="optional heatmap PNG path")

    p = add("noise-sweep", cmd_noise_sweep, "cross-validated accuracy under feature noise")
    p.add_argument("--features", required=True, help="feature CSV")
    p.add_argument("--sigmas", type=_csv_floats, default=(0.0, 0.05, 0.1, 0.2, 0.5), help="noise levels")
    p.add_argument("--folds", type=int, default=5, help="cross-validation folds")
    _add_model_flags(p)
    p.add_argument("--out", required=True, help="CSV path (sigma,cv_mean,cv_std)")
    p.add_argument("--figure", help="optional PNG path")

    p = add("importance", cmd_importance, "permutation feature importance of a saved model")
    p.add_argument("--features", required=True, help="feature CSV")
    p.add_argument("--model", required=True, help="model JSON")
    p.add_argument("--repeats", type=int, default=5, help="shuffles per feature")
    p.add_argument("--out", required=True, help="CSV path (feature,drop)")
    p.add_argument("--figure", help="optional PNG path")

    p = add("pipeline", cmd_pipeline, "run the full pipeline from an INI config")
    p.add_argument("--config", required=True, help="pipeline INI config, or bundled:NAME (synth_default, synth_loads)")
    p.add_argument("--output-dir", help="override [pipeline] output_dir")
    p.add_argument("--leakage", choices=LEAKAGE_MODES, help="override [graph] leakage")
    p.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    return parser


STAGE_OF_COMMAND = {"pipeline": "config", "cross-eval": "transfer", "noise-sweep": "noise_sweep"}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(name)s: %(message)s")
    try:
        args.func(args)
    except StageFailure as exc:
        print(f"graphfault: error in stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return exit_code(exc)
    except GraphFaultError as exc:
        stage = STAGE_OF_COMMAND.get(args.command, args.command.replace("-", "_"))
        print(f"graphfault: error in stage {stage}: {exc}", file=sys.stderr)
        return exit_code(exc)
    except OSError as exc:
        print(f"graphfault: error in stage {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
