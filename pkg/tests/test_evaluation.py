import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphfault.errors import ClassTooSmall, ConfigError, KTooLarge, LengthMismatch
from graphfault.evaluation import (
    classification_report,
    confusion_matrix,
    cross_validate,
    noise_sweep,
    stratified_kfold,
    stratified_split,
    write_confusion_csv,
)
from graphfault.features import standardize_apply, standardize_fit
from graphfault.model import TrainConfig

from conftest import blobs

RF = TrainConfig(kind="random_forest", trees=20, seed=1)


def test_split_counts():
    y = np.repeat([0, 1], 10)
    tr, te = stratified_split(y, 0.3, seed=0)
    assert np.bincount(y[te]).tolist() == [3, 3]
    assert set(tr) & set(te) == set() and sorted(np.concatenate([tr, te])) == list(range(20))
    tr2, te2 = stratified_split(y, 0.3, seed=0)
    assert np.array_equal(te, te2) and np.array_equal(tr, tr2)


def test_split_errors():
    with pytest.raises(ClassTooSmall):
        stratified_split(np.array([0, 0, 1]), 0.3, 0)
    with pytest.raises(ConfigError):
        stratified_split(np.array([0, 0, 1, 1]), 1.0, 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(2, 30), min_size=1, max_size=5), st.floats(0.05, 0.95), st.integers(0, 1000))
def test_split_partition_property(sizes, frac, seed):
    y = np.repeat(np.arange(len(sizes)), sizes)
    tr, te = stratified_split(y, frac, seed)
    assert np.array_equal(np.sort(np.concatenate([tr, te])), np.arange(y.size))
    for c, n in enumerate(sizes):
        assert np.sum(y[te] == c) == min(max(int(round(n * frac)), 1), n - 1)


def test_kfold_single_class():
    folds = stratified_kfold(np.zeros(10, dtype=int), 5, 0)
    assert [len(f) for f in folds] == [2] * 5


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(5, 40), min_size=1, max_size=5), st.integers(2, 5), st.integers(0, 1000))
def test_kfold_properties(sizes, k, seed):
    y = np.repeat(np.arange(len(sizes)), sizes)
    folds = stratified_kfold(y, k, seed)
    allidx = np.concatenate(folds)
    assert np.array_equal(np.sort(allidx), np.arange(y.size))
    for c, n in enumerate(sizes):
        per = [np.sum(y[f] == c) for f in folds]
        assert max(per) - min(per) <= 1
    for f in folds:
        for c, n in enumerate(sizes):
            assert abs(np.sum(y[f] == c) - n * len(f) / y.size) <= 1 + 1e-9 * y.size


def test_kfold_errors():
    with pytest.raises(KTooLarge):
        stratified_kfold(np.array([0, 0, 1, 1, 1]), 3, 0)


def test_report_examples():
    r = classification_report([0, 1, 1], [0, 1, 1], K=2)
    assert r.accuracy == 1 and r.f1 == [1.0, 1.0]
    r = classification_report([0, 1], [1, 0], K=2)
    assert r.accuracy == 0 and r.f1 == [0.0, 0.0]
    r = classification_report([0, 0, 1, 1], [0, 1, 1, 1], K=2)
    assert r.accuracy == 0.75
    assert r.precision == pytest.approx([1, 2 / 3]) and r.recall == pytest.approx([0.5, 1])
    assert r.f1 == pytest.approx([2 / 3, 0.8])
    assert r.confusion.tolist() == [[1, 1], [0, 2]]


def test_report_zero_denominators_flagged():
    r = classification_report([0, 0], [0, 0], K=3)
    assert r.precision[2] == 0 and r.recall[2] == 0
    assert any("class 2" in f for f in r.flags)


def test_report_length_mismatch():
    with pytest.raises(LengthMismatch):
        classification_report([0, 1], [0], K=2)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(1, 200), st.integers(0, 10**6))
def test_report_identities(k, n, seed):
    g = np.random.default_rng(seed)
    yt, yp = g.integers(0, k, n), g.integers(0, k, n)
    r = classification_report(yt, yp, K=k)
    assert abs(np.dot(r.support, r.recall) / n - r.accuracy) <= 1e-12
    assert r.confusion.sum() == n
    assert r.confusion.sum(axis=1).tolist() == r.support
    assert r.weighted_recall == pytest.approx(r.accuracy, abs=1e-12)
    for v in r.precision + r.recall + r.f1 + [r.accuracy, r.macro_f1, r.weighted_f1]:
        assert 0 <= v <= 1


def test_confusion_matrix_orientation():
    assert confusion_matrix([0, 0, 1], [1, 0, 1], [0, 1]).tolist() == [[1, 1], [0, 1]]


def test_cross_validate_separable():
    x, y = blobs(n_per=40, d=4, k=3, sep=12.0, seed=3)
    cv = cross_validate(x, y, RF, 5, seed=4)
    assert cv["cv_mean"] >= 0.99 and cv["cv_std"] <= 0.01
    accs = [f.accuracy for f in cv["folds"]]
    assert cv["cv_mean"] == math.fsum(accs) / len(accs)
    assert cv["cv_std"] == pytest.approx(np.std(accs), abs=1e-15)


def test_cross_validate_deterministic_and_prepare():
    x, y = blobs(n_per=20, d=3, k=2, sep=1.0, seed=5)
    a = cross_validate(x, y, RF, 4, seed=6)
    b = cross_validate(x, y, RF, 4, seed=6)
    assert a["cv_mean"] == b["cv_mean"] and a["cv_std"] == b["cv_std"]
    c = cross_validate(x, y, RF, 4, seed=6, prepare=lambda tr, te: (x[tr], x[te]))
    assert c["cv_mean"] == a["cv_mean"]


def test_noise_sweep_zero_row_is_clean_run():
    x, y = blobs(n_per=30, d=4, k=3, sep=2.0, seed=7)
    rows = noise_sweep(x, y, RF, (0.0, 0.5), 5, seed=8)
    clean = cross_validate(standardize_apply(x, standardize_fit(x)), y, RF, 5, seed=8)
    assert rows[0] == (0.0, clean["cv_mean"], clean["cv_std"])


def test_noise_sweep_trend():
    for seed in range(5):
        x, y = blobs(n_per=30, d=4, k=3, sep=3.0, seed=seed)
        rows = noise_sweep(x, y, RF, (0.0, 0.5), 5, seed=seed)
        assert rows[1][1] <= rows[0][1] + 0.01


def test_noise_sweep_negative_sigma():
    x, y = blobs(n_per=10, d=2, k=2, seed=0)
    with pytest.raises(ConfigError):
        noise_sweep(x, y, RF, (-0.1,), 2, 0)


def test_confusion_csv(tmp_path):
    r = classification_report([0, 1, 1], [0, 1, 0], K=2)
    write_confusion_csv(r, tmp_path / "c.csv", ["ok", "bad"])
    assert (tmp_path / "c.csv").read_text().splitlines() == ["true\\pred,ok,bad", "ok,1,0", "bad,1,1"]


def test_report_to_dict():
    d = classification_report([0, 1], [0, 1], K=2).to_dict()
    assert d["confusion"] == [[1, 0], [0, 1]] and d["weighted_precision"] == 1.0
