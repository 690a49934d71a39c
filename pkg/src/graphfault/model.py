"""Softmax regression, random forest and linear SVM on augmented features."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DegenerateLabels, DimensionMismatch, SchemaMismatch
from .features import FeatureMatrix, Standardizer, standardize_apply, standardize_fit

MODEL_FORMAT_VERSION = 1
KINDS = ("softmax", "random_forest", "linear_svm")
SVM_BATCH = 32


@dataclass
class TrainConfig:
    kind: str = "random_forest"
    lam: float = 1e-3
    epochs: int = 500
    learning_rate: float = 0.1
    trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    features_per_split: str | int = "sqrt"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"model kind must be one of {KINDS}, got {self.kind!r}")
        if self.lam < 0:
            raise ConfigError("lambda must be nonnegative")
        if self.epochs < 1 or self.trees < 1 or self.min_leaf < 1 or self.learning_rate <= 0:
            raise ConfigError("epochs, trees, min_leaf must be >= 1 and learning_rate > 0")
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1 or None")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(**d)


@dataclass
class TrainedModel:
    kind: str
    classes: np.ndarray
    payload: dict
    standardizer: Standardizer
    feature_names: list
    config: TrainConfig = field(default_factory=TrainConfig)

    @property
    def n_classes(self) -> int:
        return len(self.classes)


@dataclass
class Prediction:
    labels: np.ndarray
    scores: np.ndarray


def _unpack(Z, y=None):
    if isinstance(Z, FeatureMatrix):
        x, names = Z.rows, list(Z.names)
        if y is None:
            y = Z.labels
    else:
        x = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        names = [f"f{i}" for i in range(x.shape[1])]
    if y is not None:
        y = np.asarray(y, dtype=int)
        if y.shape[0] != x.shape[0]:
            raise DimensionMismatch("label count does not match row count")
    return x, y, names


def _class_index(y, classes, min_classes=2):
    if classes is None:
        classes = np.unique(y)
    classes = np.asarray(sorted(set(int(c) for c in classes)), dtype=int)
    if len(classes) < min_classes:
        raise DegenerateLabels("training needs at least two classes")
    lookup = {int(c): i for i, c in enumerate(classes)}
    try:
        yi = np.array([lookup[int(v)] for v in y], dtype=int)
    except KeyError as exc:
        raise DataError(f"label {exc.args[0]} not in the declared classes") from None
    return classes, yi


def _prepare(Z, y, classes, standardizer, min_classes=2):
    x, y, names = _unpack(Z, y)
    if y is None:
        raise DataError("training requires labels")
    classes, yi = _class_index(y, classes, min_classes)
    if standardizer is None:
        standardizer = standardize_fit(x)
    return standardize_apply(x, standardizer), yi, classes, names, standardizer


# softmax regression

def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_loss_and_grad(W, b, X, Y, lam):
    """Mean cross-entropy plus ``lam/2 * ||W||^2`` and its gradients.

    ``Y`` is one-hot, shaped (n, K); ``W`` is (K, d).
    """
    n = X.shape[0]
    logp = _log_softmax(X @ W.T + b)
    loss = -(Y * logp).sum() / n + 0.5 * lam * (W * W).sum()
    err = (np.exp(logp) - Y) / n
    return loss, err.T @ X + lam * W, err.sum(axis=0)


def train_softmax_regression(Z, y=None, cfg: TrainConfig | None = None, classes=None,
                             standardizer=None) -> TrainedModel:
    """Full-batch gradient descent from zero weights."""
    cfg = cfg or TrainConfig(kind="softmax")
    x, yi, classes, names, std = _prepare(Z, y, classes, standardizer)
    K, d = len(classes), x.shape[1]
    Y = np.eye(K)[yi]
    W = np.zeros((K, d))
    b = np.zeros(K)
    history = []
    for _ in range(cfg.epochs):
        loss, gW, gb = softmax_loss_and_grad(W, b, x, Y, cfg.lam)
        history.append(loss)
        W -= cfg.learning_rate * gW
        b -= cfg.learning_rate * gb
    history.append(softmax_loss_and_grad(W, b, x, Y, cfg.lam)[0])
    payload = {"W": W, "b": b, "loss_history": [history[0], history[-1]]}
    return TrainedModel("softmax", classes, payload, std, names, cfg)


# random forest

def _n_split_features(spec, d):
    if spec == "sqrt":
        return max(1, int(math.sqrt(d)))
    if spec == "all":
        return d
    k = int(spec)
    if k < 1:
        raise ConfigError("features_per_split must be >= 1")
    return min(k, d)


def _best_split(x_node, onehot_node, features, m_try, min_leaf):
    """Best Gini split over the first ``m_try`` non-constant candidate features."""
    m = x_node.shape[0]
    best = None
    tried = 0
    left_n = np.arange(1, m, dtype=np.float64)
    for f in features:
        vals = x_node[:, f]
        if vals.min() == vals.max():
            continue
        tried += 1
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        csum = np.cumsum(onehot_node[order], axis=0)
        lc = csum[:-1]
        rc = csum[-1] - lc
        ok = (sv[1:] > sv[:-1]) & (left_n >= min_leaf) & (m - left_n >= min_leaf)
        if ok.any():
            right_n = m - left_n
            gini_l = 1.0 - ((lc / left_n[:, None]) ** 2).sum(1)
            gini_r = 1.0 - ((rc / right_n[:, None]) ** 2).sum(1)
            score = left_n * gini_l + right_n * gini_r
            score[~ok] = np.inf
            i = int(score.argmin())
            if best is None or score[i] < best[0]:
                thr = 0.5 * (sv[i] + sv[i + 1])
                if not sv[i] <= thr < sv[i + 1]:
                    thr = sv[i]
                best = (score[i], f, thr)
        if tried >= m_try:
            break
    return best


def _grow_tree(x, yi, n_classes, cfg, rng):
    d = x.shape[1]
    m_try = _n_split_features(cfg.features_per_split, d)
    onehot = np.eye(n_classes)[yi]
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(onehot[idx].sum(axis=0))
        return len(feature) - 1

    stack = [(new_node(np.arange(x.shape[0])), np.arange(x.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = value[node]
        if (
            np.count_nonzero(counts) <= 1
            or (cfg.max_depth is not None and depth >= cfg.max_depth)
            or idx.size < 2 * cfg.min_leaf
        ):
            continue
        split = _best_split(x[idx], onehot[idx], rng.permutation(d), m_try, cfg.min_leaf)
        if split is None:
            continue
        _, f, thr = split
        go_left = x[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = int(f), float(thr)
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return {
        "feature": np.array(feature, dtype=int),
        "threshold": np.array(threshold),
        "left": np.array(left, dtype=int),
        "right": np.array(right, dtype=int),
        "value": np.array(value),
    }


def _tree_leaf_values(tree, x):
    node = np.zeros(x.shape[0], dtype=int)
    active = tree["feature"][node] >= 0
    while active.any():
        rows = np.flatnonzero(active)
        n = node[rows]
        f = tree["feature"][n]
        go_left = x[rows, f] <= tree["threshold"][n]
        node[rows] = np.where(go_left, tree["left"][n], tree["right"][n])
        active[rows] = tree["feature"][node[rows]] >= 0
    return tree["value"][node]


def train_random_forest(Z, y=None, cfg: TrainConfig | None = None, classes=None,
                        standardizer=None) -> TrainedModel:
    """Bootstrap-aggregated CART trees with Gini splits.

    Per-tree seeds are drawn up front from ``cfg.seed``, so the forest is a
    deterministic function of data and config.
    """
    cfg = cfg or TrainConfig(kind="random_forest")
    # a one-class forest is legal and always votes that class
    x, yi, classes, names, std = _prepare(Z, y, classes, standardizer, min_classes=1)
    n = x.shape[0]
    if n < 2:
        raise DataError("random forest needs at least 2 rows")
    tree_seeds = np.random.default_rng(cfg.seed).integers(0, 2**63 - 1, size=cfg.trees)
    trees = []
    for s in tree_seeds:
        rng = np.random.default_rng(int(s))
        boot = rng.integers(0, n, size=n)
        trees.append(_grow_tree(x[boot], yi[boot], len(classes), cfg, rng))
    prior = np.bincount(yi, minlength=len(classes)) / n
    return TrainedModel("random_forest", classes, {"trees": trees, "class_prior": prior}, std, names, cfg)


def forest_votes(payload, x, n_classes) -> np.ndarray:
    votes = np.zeros((x.shape[0], n_classes))
    rows = np.arange(x.shape[0])
    for tree in payload["trees"]:
        votes[rows, _tree_leaf_values(tree, x).argmax(axis=1)] += 1
    return votes


# linear SVM

def svm_objective(W, b, X, Ypm, lam) -> float:
    """Sum over one-vs-rest classes of ``lam/2 ||w||^2 + mean hinge``."""
    margins = Ypm * (X @ W.T + b)
    return float(0.5 * lam * (W * W).sum() + np.maximum(0.0, 1.0 - margins).mean(axis=0).sum())


def train_linear_svm(Z, y=None, cfg: TrainConfig | None = None, classes=None,
                     standardizer=None) -> TrainedModel:
    """One-vs-rest linear SVMs by seeded mini-batch subgradient descent."""
    cfg = cfg or TrainConfig(kind="linear_svm")
    x, yi, classes, names, std = _prepare(Z, y, classes, standardizer)
    n, d = x.shape
    K = len(classes)
    Ypm = np.where(np.eye(K)[yi] > 0, 1.0, -1.0)
    W = np.zeros((K, d))
    b = np.zeros(K)
    rng = np.random.default_rng(cfg.seed)
    history = []
    for epoch in range(cfg.epochs):
        eta = cfg.learning_rate / math.sqrt(1.0 + epoch)
        order = rng.permutation(n)
        for s in range(0, n, SVM_BATCH):
            idx = order[s : s + SVM_BATCH]
            xb, yb = x[idx], Ypm[idx]
            active = (yb * (xb @ W.T + b) < 1.0) * yb  # (m, K)
            gW = cfg.lam * W - active.T @ xb / idx.size
            gb = -active.sum(axis=0) / idx.size
            W -= eta * gW
            b -= eta * gb
        history.append(svm_objective(W, b, x, Ypm, cfg.lam))
    payload = {"W": W, "b": b, "objective_history": [history[0], history[-1]]}
    return TrainedModel("linear_svm", classes, payload, std, names, cfg)


TRAINERS = {
    "softmax": train_softmax_regression,
    "random_forest": train_random_forest,
    "linear_svm": train_linear_svm,
}


def train(Z, y=None, cfg: TrainConfig | None = None, classes=None, standardizer=None) -> TrainedModel:
    cfg = cfg or TrainConfig()
    return TRAINERS[cfg.kind](Z, y, cfg, classes=classes, standardizer=standardizer)


def predict(model: TrainedModel, Z) -> Prediction:
    """Scores and labels.

    Scores are class probabilities (softmax), vote fractions (forest) or
    decision values (SVM). Labels are the row-wise arg-max; ties go to the
    lower class id, except forest vote ties, which go to the more frequent
    training class first.
    """
    x, _, _ = _unpack(Z)
    if x.shape[1] != len(model.feature_names):
        raise DimensionMismatch(
            f"model expects {len(model.feature_names)} features, got {x.shape[1]}"
        )
    xs = standardize_apply(x, model.standardizer)
    p = model.payload
    if model.kind == "softmax":
        scores = np.exp(_log_softmax(xs @ p["W"].T + p["b"]))
        idx = scores.argmax(axis=1)
    elif model.kind == "linear_svm":
        scores = xs @ p["W"].T + p["b"]
        idx = scores.argmax(axis=1)
    else:
        votes = forest_votes(p, xs, model.n_classes)
        scores = votes / len(p["trees"])
        tied = votes == votes.max(axis=1, keepdims=True)
        # among tied classes prefer the larger prior, then the lower id
        rank = np.where(tied, np.asarray(p["class_prior"])[None, :], -np.inf)
        idx = rank.argmax(axis=1)
    return Prediction(model.classes[idx], scores)


def accuracy(model, Z, y) -> float:
    return float(np.mean(predict(model, Z).labels == np.asarray(y)))


def permutation_importance(model: TrainedModel, Z, y=None, repeats: int = 5, seed: int = 0) -> list:
    """Mean accuracy drop when each column is shuffled, sorted descending.

    Returns ``(feature_name, mean_drop)`` pairs.
    """
    x, y, _ = _unpack(Z, y)
    if y is None:
        raise DataError("permutation importance needs labels")
    rng = np.random.default_rng(seed)
    base = float(np.mean(predict(model, x).labels == y))
    drops = np.zeros(x.shape[1])
    for j in range(x.shape[1]):
        total = 0.0
        for _ in range(repeats):
            xp = x.copy()
            xp[:, j] = x[rng.permutation(x.shape[0]), j]
            total += base - float(np.mean(predict(model, xp).labels == y))
        drops[j] = total / repeats
    order = sorted(range(x.shape[1]), key=lambda j: (-drops[j], j))
    return [(model.feature_names[j], float(drops[j])) for j in order]


def transfer_run(source, target, cfg: TrainConfig | None = None, mode: str = "zero_shot",
                 test_fraction: float = 0.3, seed: int = 0):
    """Train on a source domain and evaluate on a target domain.

    ``zero_shot`` scores the source model on the whole target.
    ``augmented_refit`` retrains on source plus a stratified 70% of the
    target and scores the held-out 30%. The standardizer is fit on the
    source rows in both modes.
    """
    from .evaluation import classification_report, stratified_split

    cfg = cfg or TrainConfig()
    xs, ys, names_s = _unpack(source)
    xt, yt, names_t = _unpack(target)
    if ys is None or yt is None:
        raise DataError("transfer needs labelled source and target")
    if isinstance(source, FeatureMatrix) and isinstance(target, FeatureMatrix) and names_s != names_t:
        raise SchemaMismatch("source and target feature names differ")
    if xs.shape[1] != xt.shape[1]:
        raise SchemaMismatch(f"source has {xs.shape[1]} features, target {xt.shape[1]}")
    classes = np.union1d(np.unique(ys), np.unique(yt))
    std = standardize_fit(xs)
    if mode == "zero_shot":
        model = train(xs, ys, cfg, classes=classes, standardizer=std)
        x_eval, y_eval = xt, yt
    elif mode == "augmented_refit":
        tr, te = stratified_split(yt, test_fraction, seed)
        model = train(np.vstack([xs, xt[tr]]), np.concatenate([ys, yt[tr]]), cfg, classes=classes,
                      standardizer=std)
        x_eval, y_eval = xt[te], yt[te]
    else:
        raise ConfigError(f"unknown transfer mode {mode!r}")
    model.feature_names = names_s
    report = classification_report(y_eval, predict(model, x_eval).labels, classes=classes)
    report.mode["transfer"] = mode
    return report


# serialization

def _tree_to_json(t):
    return {k: v.tolist() for k, v in t.items()}


def _tree_from_json(t):
    return {
        "feature": np.asarray(t["feature"], dtype=int),
        "threshold": np.asarray(t["threshold"], dtype=np.float64),
        "left": np.asarray(t["left"], dtype=int),
        "right": np.asarray(t["right"], dtype=int),
        "value": np.asarray(t["value"], dtype=np.float64),
    }


def model_to_dict(model: TrainedModel) -> dict:
    p = model.payload
    if model.kind == "random_forest":
        payload = {"trees": [_tree_to_json(t) for t in p["trees"]], "class_prior": np.asarray(p["class_prior"]).tolist()}
    else:
        payload = {"W": p["W"].tolist(), "b": p["b"].tolist()}
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "classes": [int(c) for c in model.classes],
        "feature_names": list(model.feature_names),
        "standardizer": model.standardizer.to_dict(),
        "config": model.config.to_dict(),
        "payload": payload,
    }


def model_from_dict(d: dict) -> TrainedModel:
    if d.get("format_version") != MODEL_FORMAT_VERSION:
        raise DataError(f"unsupported model format version {d.get('format_version')!r}")
    p = d["payload"]
    if d["kind"] == "random_forest":
        payload = {"trees": [_tree_from_json(t) for t in p["trees"]], "class_prior": np.asarray(p["class_prior"])}
    else:
        payload = {"W": np.asarray(p["W"], dtype=np.float64), "b": np.asarray(p["b"], dtype=np.float64)}
    return TrainedModel(
        d["kind"],
        np.asarray(d["classes"], dtype=int),
        payload,
        Standardizer.from_dict(d["standardizer"]),
        list(d["feature_names"]),
        TrainConfig.from_dict(d["config"]),
    )


def save_model(model: TrainedModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)) + "\n")


def load_model(path) -> TrainedModel:
    return model_from_dict(json.loads(Path(path).read_text()))
