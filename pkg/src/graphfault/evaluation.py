"""Splits, cross-validation, classification metrics and noise sweeps."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ClassTooSmall, ConfigError, KTooLarge, LengthMismatch
from .features import standardize_apply, standardize_fit
from .ingest import inject_feature_noise
from .model import TrainConfig, _unpack, predict, train


@dataclass
class EvalReport:
    classes: list
    accuracy: float
    precision: list
    recall: list
    f1: list
    support: list
    macro_f1: float
    weighted_f1: float
    confusion: np.ndarray
    cv_mean: float | None = None
    cv_std: float | None = None
    timing: dict = field(default_factory=dict)
    mode: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    @property
    def macro_precision(self) -> float:
        return float(np.mean(self.precision))

    @property
    def macro_recall(self) -> float:
        return float(np.mean(self.recall))

    @property
    def weighted_precision(self) -> float:
        s = np.asarray(self.support, dtype=float)
        return float(np.dot(s, self.precision) / s.sum())

    @property
    def weighted_recall(self) -> float:
        s = np.asarray(self.support, dtype=float)
        return float(np.dot(s, self.recall) / s.sum())

    def to_dict(self) -> dict:
        return {
            "classes": [int(c) for c in self.classes],
            "accuracy": self.accuracy,
            "precision": list(self.precision),
            "recall": list(self.recall),
            "f1": list(self.f1),
            "support": [int(s) for s in self.support],
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "confusion": self.confusion.astype(int).tolist(),
            "cv_mean": self.cv_mean,
            "cv_std": self.cv_std,
            "timing": dict(self.timing),
            "mode": dict(self.mode),
            "flags": list(self.flags),
        }


def _per_class_indices(y, rng):
    out = []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        out.append((c, rng.permutation(idx)))
    return out


def stratified_split(y, test_fraction: float = 0.3, seed: int = 0):
    """Per-class shuffled train/test split; returns sorted index arrays."""
    y = np.asarray(y)
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c, idx in _per_class_indices(y, rng):
        if idx.size < 2:
            raise ClassTooSmall(f"class {c} has fewer than 2 members")
        n_test = int(round(idx.size * test_fraction))
        n_test = min(max(n_test, 1), idx.size - 1)
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


def stratified_kfold(y, k: int = 5, seed: int = 0) -> list:
    """``k`` disjoint test folds, classes dealt round-robin after a shuffle."""
    y = np.asarray(y)
    if k < 2:
        raise ConfigError("k must be >= 2")
    counts = np.unique(y, return_counts=True)[1]
    if k > counts.min():
        raise KTooLarge(f"k={k} exceeds the smallest class size {counts.min()}")
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    offset = 0
    for _, idx in _per_class_indices(y, rng):
        for j, i in enumerate(idx):
            folds[(j + offset) % k].append(i)
        # rotate so leftover samples of successive classes land in different folds
        offset = (offset + idx.size) % k
    return [np.sort(np.array(f, dtype=int)) for f in folds]


def confusion_matrix(y_true, y_pred, classes) -> np.ndarray:
    lookup = {int(c): i for i, c in enumerate(classes)}
    cm = np.zeros((len(classes), len(classes)), dtype=int)
    for t, p in zip(y_true, y_pred):
        cm[lookup[int(t)], lookup[int(p)]] += 1
    return cm


def classification_report(y_true, y_pred, K: int | None = None, classes=None) -> EvalReport:
    """Accuracy and per-class precision, recall and F1 from the confusion matrix.

    Empty denominators give 0 and are listed in ``flags``.
    """
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch(f"{y_true.size} true labels vs {y_pred.size} predictions")
    if classes is None:
        classes = np.arange(K) if K is not None else np.union1d(y_true, y_pred)
    classes = [int(c) for c in classes]
    cm = confusion_matrix(y_true, y_pred, classes)
    tp = np.diag(cm).astype(float)
    col = cm.sum(axis=0).astype(float)
    row = cm.sum(axis=1).astype(float)
    flags = []
    precision, recall, f1 = [], [], []
    for i, c in enumerate(classes):
        p = tp[i] / col[i] if col[i] else 0.0
        r = tp[i] / row[i] if row[i] else 0.0
        if not col[i]:
            flags.append(f"precision undefined for class {c}")
        if not row[i]:
            flags.append(f"recall undefined for class {c}")
        precision.append(float(p))
        recall.append(float(r))
        f1.append(float(2 * p * r / (p + r)) if p + r else 0.0)
    total = cm.sum()
    weighted = float(np.dot(row, f1) / row.sum()) if row.sum() else 0.0
    return EvalReport(
        classes=classes,
        accuracy=float(tp.sum() / total) if total else 0.0,
        precision=precision,
        recall=recall,
        f1=f1,
        support=[int(v) for v in row],
        macro_f1=float(np.mean(f1)),
        weighted_f1=weighted,
        confusion=cm,
        flags=flags,
    )


def cross_validate(Z, y=None, cfg: TrainConfig | None = None, k: int = 5, seed: int = 0,
                   prepare=None) -> dict:
    """Stratified k-fold accuracy with population std.

    ``prepare(train_idx, test_idx) -> (Z_train, Z_test)`` optionally rebuilds
    fold-specific features (leakage-free graph augmentation); by default the
    rows of ``Z`` are used as given.
    """
    cfg = cfg or TrainConfig()
    x, y, _ = _unpack(Z, y)
    classes = np.unique(y)
    reports = []
    for fold in stratified_kfold(y, k, seed):
        test = fold
        mask = np.ones(y.size, dtype=bool)
        mask[test] = False
        tr = np.flatnonzero(mask)
        if prepare is None:
            x_tr, x_te = x[tr], x[test]
        else:
            x_tr, x_te = prepare(tr, test)
        model = train(x_tr, y[tr], cfg, classes=classes)
        reports.append(classification_report(y[test], predict(model, x_te).labels, classes=classes))
    accs = [r.accuracy for r in reports]
    return {"cv_mean": math.fsum(accs) / len(accs), "cv_std": float(np.std(accs)), "folds": reports}


def noise_sweep(Z, y=None, cfg: TrainConfig | None = None, sigmas=(0.0, 0.05, 0.1, 0.2, 0.5),
                k: int = 5, seed: int = 0) -> list:
    """Cross-validated accuracy with Gaussian noise added in standardized units.

    Returns ``(sigma, cv_mean, cv_std)`` rows. The zero-noise row is the
    plain cross-validation of the standardized matrix.
    """
    x, y, _ = _unpack(Z, y)
    if any(s < 0 for s in sigmas):
        raise ConfigError("noise levels must be nonnegative")
    xs = standardize_apply(x, standardize_fit(x))
    rows = []
    for sigma in sigmas:
        noisy = inject_feature_noise(xs, sigma, seed)
        cv = cross_validate(noisy, y, cfg, k, seed)
        rows.append((float(sigma), cv["cv_mean"], cv["cv_std"]))
    return rows


def write_confusion_csv(report: EvalReport, path, class_names=None) -> None:
    names = class_names or [str(c) for c in report.classes]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["true\\pred"] + list(names))
        for name, row in zip(names, report.confusion):
            w.writerow([name] + [int(v) for v in row])
