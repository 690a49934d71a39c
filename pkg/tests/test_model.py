import numpy as np
import pytest

from graphfault.errors import ConfigError, DegenerateLabels, DimensionMismatch, SchemaMismatch
from graphfault.features import FeatureMatrix, standardize_fit
from graphfault.model import (
    TrainConfig,
    TrainedModel,
    load_model,
    model_from_dict,
    model_to_dict,
    permutation_importance,
    predict,
    save_model,
    softmax_loss_and_grad,
    svm_objective,
    train,
    transfer_run,
)

from conftest import blobs

KINDS = ["softmax", "random_forest", "linear_svm"]


def _cfg(kind, **kw):
    base = {"softmax": {}, "random_forest": {"trees": 25}, "linear_svm": {"epochs": 100}}[kind]
    return TrainConfig(kind=kind, seed=3, **{**base, **kw})


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(kind="mlp")
    with pytest.raises(ConfigError):
        TrainConfig(lam=-1)
    d = TrainConfig(lam=0.5, max_depth=4).to_dict()
    assert d["lambda"] == 0.5 and TrainConfig.from_dict(d) == TrainConfig(lam=0.5, max_depth=4)


def test_softmax_gradient_finite_differences():
    g = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        n, d, k = 5, 7, 3
        x = g.normal(size=(n, d))
        y = np.eye(k)[g.integers(0, k, n)]
        W, b = g.normal(size=(k, d)), g.normal(size=k)
        lam = g.uniform(0, 0.5)
        _, gW, gb = softmax_loss_and_grad(W, b, x, y, lam)
        h = 1e-6
        num_W = np.zeros_like(W)
        for i in range(k):
            for j in range(d):
                Wp, Wm = W.copy(), W.copy()
                Wp[i, j] += h
                Wm[i, j] -= h
                num_W[i, j] = (softmax_loss_and_grad(Wp, b, x, y, lam)[0]
                               - softmax_loss_and_grad(Wm, b, x, y, lam)[0]) / (2 * h)
        num_b = np.zeros(k)
        for i in range(k):
            bp, bm = b.copy(), b.copy()
            bp[i] += h
            bm[i] -= h
            num_b[i] = (softmax_loss_and_grad(W, bp, x, y, lam)[0] - softmax_loss_and_grad(W, bm, x, y, lam)[0]) / (2 * h)
        ana = np.concatenate([gW.ravel(), gb])
        num = np.concatenate([num_W.ravel(), num_b])
        worst = max(worst, np.max(np.abs(ana - num)) / max(np.max(np.abs(num)), 1e-12))
    assert worst < 1e-4


def test_softmax_memorizes_single_point():
    m = train(np.array([[0.3, -1.2]]), np.array([1]), TrainConfig(kind="softmax"), classes=[0, 1, 2])
    p = predict(m, np.array([[0.3, -1.2]]))
    assert p.labels[0] == 1 and p.scores[0, 1] > 0.9


def test_softmax_loss_decreases_and_scores_sum_to_one():
    x, y = blobs(n_per=40, d=5, k=3, sep=2.0, seed=1)
    m = train(x, y, TrainConfig(kind="softmax"))
    first, last = m.payload["loss_history"]
    assert last <= first
    s = predict(m, x).scores
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-9)


@pytest.mark.parametrize("kind", KINDS)
def test_separable_blobs(kind):
    x, y = blobs(n_per=50, d=4, k=2, sep=10.0, seed=2)
    m = train(x, y, _cfg(kind))
    acc = np.mean(predict(m, x).labels == y)
    assert acc >= 0.99
    if kind == "random_forest":
        assert acc == 1.0


@pytest.mark.parametrize("kind", KINDS)
def test_determinism(kind):
    x, y = blobs(n_per=30, d=4, k=3, sep=1.5, seed=4)
    held = np.random.default_rng(5).normal(size=(20, 4))
    a = predict(train(x, y, _cfg(kind)), held)
    b = predict(train(x, y, _cfg(kind)), held)
    assert np.array_equal(a.labels, b.labels) and np.array_equal(a.scores, b.scores)


@pytest.mark.parametrize("kind", KINDS)
def test_labels_are_argmax(kind):
    x, y = blobs(n_per=30, d=3, k=3, sep=1.0, seed=6)
    p = predict(train(x, y, _cfg(kind)), x)
    if kind == "random_forest":
        top = p.scores.max(axis=1)
        assert np.all(p.scores[np.arange(len(y)), np.searchsorted(np.unique(y), p.labels)] == top)
    else:
        assert np.array_equal(p.labels, np.unique(y)[p.scores.argmax(axis=1)])


def test_forest_single_class():
    x = np.random.default_rng(0).normal(size=(12, 3))
    m = train(x, np.full(12, 4), TrainConfig(trees=5))
    assert np.all(predict(m, np.random.default_rng(1).normal(size=(7, 3))).labels == 4)


def test_forest_vote_fraction():
    def stump(cls):
        return {"feature": np.array([-1]), "threshold": np.array([0.0]), "left": np.array([-1]),
                "right": np.array([-1]), "value": np.eye(3)[[cls]]}

    trees = [stump(2)] * 7 + [stump(0)] * 2 + [stump(1)]
    std = standardize_fit(np.zeros((2, 1)))
    m = TrainedModel("random_forest", np.array([0, 1, 2]), {"trees": trees, "class_prior": np.full(3, 1 / 3)},
                     std, ["a"])
    p = predict(m, np.zeros((1, 1)))
    assert p.scores[0, 2] == pytest.approx(0.7) and p.labels[0] == 2


def test_forest_tie_goes_to_prior_then_lower_id():
    def stump(cls):
        return {"feature": np.array([-1]), "threshold": np.array([0.0]), "left": np.array([-1]),
                "right": np.array([-1]), "value": np.eye(3)[[cls]]}

    std = standardize_fit(np.zeros((2, 1)))
    trees = [stump(0), stump(2)]
    m = TrainedModel("random_forest", np.array([0, 1, 2]), {"trees": trees, "class_prior": np.array([0.2, 0.3, 0.5])},
                     std, ["a"])
    assert predict(m, np.zeros((1, 1))).labels[0] == 2
    m.payload["class_prior"] = np.array([0.4, 0.2, 0.4])
    assert predict(m, np.zeros((1, 1))).labels[0] == 0


def test_degenerate_labels_linear():
    x = np.zeros((4, 2))
    for kind in ("softmax", "linear_svm"):
        with pytest.raises(DegenerateLabels):
            train(x, np.zeros(4, dtype=int), TrainConfig(kind=kind))


def test_svm_1d_separable():
    m = train(np.array([[-1.0], [1.0]]), np.array([0, 1]), TrainConfig(kind="linear_svm", epochs=200))
    assert predict(m, np.array([[-1.0], [1.0]])).labels.tolist() == [0, 1]


def test_svm_objective_decreases():
    drops = []
    for seed in range(5):
        g = np.random.default_rng(seed)
        x, y = g.normal(size=(80, 6)), g.integers(0, 3, 80)
        m = train(x, y, TrainConfig(kind="linear_svm", epochs=60, seed=seed))
        first, last = m.payload["objective_history"]
        drops.append(first - last)
    assert np.mean(drops) > 0


def test_svm_duplicate_feature_consistency():
    x, y = blobs(n_per=40, d=3, k=3, sep=4.0, seed=8)
    held = np.random.default_rng(9).normal(size=(30, 3)) * 3
    cfg = TrainConfig(kind="linear_svm", epochs=150, seed=2)
    a = predict(train(x, y, cfg), held).labels
    dup = lambda z: np.column_stack([z, z[:, 0]])
    b = predict(train(dup(x), y, cfg), dup(held)).labels
    assert np.mean(a == b) >= 0.95


def test_svm_objective_value():
    W, b = np.zeros((2, 3)), np.zeros(2)
    X = np.ones((4, 3))
    Ypm = np.array([[1, -1], [1, -1], [-1, 1], [-1, 1]], dtype=float)
    assert svm_objective(W, b, X, Ypm, 0.1) == 2.0


def test_predict_dimension_mismatch():
    x, y = blobs(n_per=10, d=3, k=2, seed=0)
    m = train(x, y, _cfg("softmax"))
    with pytest.raises(DimensionMismatch):
        predict(m, np.zeros((2, 4)))


@pytest.mark.parametrize("kind", KINDS)
def test_serialization_round_trip(kind, tmp_path):
    x, y = blobs(n_per=20, d=4, k=3, sep=1.0, seed=10)
    m = train(FeatureMatrix(x, ["a", "b", "c", "d"], y), None, _cfg(kind))
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back.feature_names == ["a", "b", "c", "d"] and back.config == m.config
    p, q = predict(m, x), predict(back, x)
    assert np.array_equal(p.labels, q.labels) and np.array_equal(p.scores, q.scores)
    assert model_to_dict(model_from_dict(model_to_dict(m))) == model_to_dict(m)


def test_importance_constant_and_label_columns():
    g = np.random.default_rng(12)
    y = np.repeat([0, 1], 40)
    x = np.column_stack([g.normal(size=80), np.full(80, 3.0), y + 0.01 * g.normal(size=80), g.normal(size=80)])
    m = train(FeatureMatrix(x, ["noise", "const", "label", "noise2"], y), None, _cfg("random_forest", trees=30))
    imp = permutation_importance(m, x, y, repeats=5, seed=1)
    d = dict(imp)
    assert abs(d["const"]) < 0.01
    assert imp[0][0] == "label"
    assert imp == permutation_importance(m, x, y, repeats=5, seed=1)


def test_transfer_same_data_matches_plain_run():
    from graphfault.evaluation import classification_report

    x, y = blobs(n_per=30, d=4, k=3, sep=2.0, seed=13)
    src = FeatureMatrix(x, list("abcd"), y)
    cfg = _cfg("random_forest")
    rep = transfer_run(src, src, cfg)
    plain = classification_report(y, predict(train(src, None, cfg), x).labels)
    assert rep.accuracy == plain.accuracy and rep.f1 == plain.f1


def test_transfer_amplitude_shift():
    from graphfault.evaluation import cross_validate

    x, y = blobs(n_per=60, d=5, k=3, sep=6.0, seed=14)
    x = np.abs(x) + 1.0
    cfg = _cfg("random_forest")
    in_domain = cross_validate(x, y, cfg, 5, 0)["cv_mean"]
    rep = transfer_run(FeatureMatrix(x, list("abcde"), y), FeatureMatrix(x * 1.1, list("abcde"), y), cfg)
    assert rep.accuracy >= in_domain - 0.05


def test_transfer_augmented_refit_and_schema():
    x, y = blobs(n_per=30, d=3, k=2, sep=3.0, seed=15)
    rep = transfer_run(FeatureMatrix(x, list("abc"), y), FeatureMatrix(x + 0.5, list("abc"), y), _cfg("softmax"),
                       mode="augmented_refit", seed=2)
    assert sum(rep.support) == 18
    with pytest.raises(SchemaMismatch):
        transfer_run(FeatureMatrix(x, list("abc"), y), FeatureMatrix(x, list("abd"), y))
    with pytest.raises(ConfigError):
        transfer_run(FeatureMatrix(x, list("abc"), y), FeatureMatrix(x, list("abc"), y), mode="few_shot")
