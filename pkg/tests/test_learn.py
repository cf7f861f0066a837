from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emomarket.corpus import EMOTIONS, EmotionLabel
from emomarket.learn import (
    SVMES_SPECS,
    Dataset,
    FeatureScaler,
    FeatureSpec,
    Hyperparams,
    LearnError,
    LRModel,
    SVMModel,
    TrainedModel,
    build_features,
    full_spec,
    kernel_matrix,
    kkt_violation,
    lr_loss_and_grad,
    predict,
    smo_solve,
    softmax,
    svmes_feature_spec,
    train_binary_svm,
    train_logistic,
    train_svm,
)
from emomarket.discretize import kmeans_1d
from emomarket.timeseries import EmotionSeries, TradingCalendar

from oracles import kkt_report


def ds_from(X, y):
    X = np.asarray(X, dtype=float)
    return Dataset(tuple(date(2000, 1, 1) + timedelta(days=i) for i in range(len(X))), X, np.asarray(y))


def blobs(n=200, seed=0, centers=((-2, -2), (2, 2)), sd=0.5):
    rng = np.random.default_rng(seed)
    k = len(centers)
    y = np.arange(n) % k
    X = np.asarray(centers, dtype=float)[y] + sd * rng.normal(size=(n, 2))
    return X, y


def xor(n=200, seed=0):
    rng = np.random.default_rng(seed)
    q = np.arange(n) % 4
    c = np.array([(-1, -1), (1, 1), (-1, 1), (1, -1)], dtype=float)
    X = c[q] + 0.25 * rng.normal(size=(n, 2))
    y = (q >= 2).astype(int)
    return X, y


# --- feature specs -----------------------------------------------------------


def test_feature_spec_tables():
    assert len(full_spec()) == 25
    assert svmes_feature_spec("close").format() == "disgust:1,disgust:2"
    assert len(svmes_feature_spec("open")) == 12
    assert len(svmes_feature_spec("volume")) == 10
    assert svmes_feature_spec("high").format() == "joy:1,joy:2,joy:3,joy:4,sadness:1,sadness:2,sadness:3,disgust:5"
    assert svmes_feature_spec("low").format() == "sadness:1,joy:1,joy:2,joy:3,disgust:5"
    for spec in SVMES_SPECS.values():
        assert all(e is not EmotionLabel.ANGER for e, _ in spec.pairs)
    with pytest.raises(LearnError):
        svmes_feature_spec("price")


def test_feature_spec_parse_and_validate():
    s = FeatureSpec.parse("joy:1, fear:2")
    assert s.pairs == ((EmotionLabel.JOY, 1), (EmotionLabel.FEAR, 2))
    assert s.max_lag == 2
    assert FeatureSpec.parse(s.format()) == s
    for bad in ("joy", "joy:0", "joy:6", "joy:1,joy:1", "happy:1"):
        with pytest.raises(ValueError):
            FeatureSpec.parse(bad)


def _series(n=8):
    rng = np.random.default_rng(2)
    days = tuple(date(2015, 3, 2) + timedelta(days=i) for i in range(n))
    return EmotionSeries(days, rng.dirichlet(np.ones(5), n))


def test_build_features_picks_shifted_proportions():
    X = _series()
    spec = FeatureSpec.parse("joy:1,fear:3,anger:2")
    target = X.dates[5]
    m = build_features(X, spec, [target])
    assert m.shape == (1, 3)
    j, f, a = (e.position for e in (EmotionLabel.JOY, EmotionLabel.FEAR, EmotionLabel.ANGER))
    np.testing.assert_array_equal(m[0], [X.values[4, j], X.values[2, f], X.values[3, a]])


def test_build_features_missing_lag_names_date():
    X = _series()
    cal = TradingCalendar(X.dates + (date(2015, 3, 10), date(2015, 3, 11)))
    gap = X.subset([d for d in X.dates if d != date(2015, 3, 7)])
    with pytest.raises(LearnError, match="missing lagged date 2015-03-07"):
        build_features(gap, FeatureSpec.parse("joy:1,joy:3"), [date(2015, 3, 10)], calendar=cal)
    with pytest.raises(LearnError):
        build_features(X, FeatureSpec.parse("joy:5"), [X.dates[2]])


@settings(max_examples=25, deadline=None)
@given(st.permutations(list(range(6))))
def test_feature_permutation_gives_same_predictions(perm):
    rng = np.random.default_rng(3)
    X = _series(40)
    spec = FeatureSpec.parse("joy:1,joy:2,fear:1,sadness:3,disgust:2,anger:1")
    dates = list(X.dates[5:])
    F = build_features(X, spec, dates)
    y = (F[:, 0] + 0.3 * rng.normal(size=len(dates)) > np.median(F[:, 0])).astype(int)
    spec_p = FeatureSpec(tuple(spec.pairs[i] for i in perm))
    F_p = build_features(X, spec_p, dates)
    np.testing.assert_array_equal(F_p, F[:, perm])
    for trainer in (train_logistic, train_svm):
        a = trainer(ds_from(F, y)).predict_many(F)
        b = trainer(ds_from(F_p, y)).predict_many(F_p)
        np.testing.assert_array_equal(a, b)


# --- logistic regression -----------------------------------------------------


def test_lr_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(30, 4))
    onehot = np.eye(3)[rng.integers(0, 3, 30)]
    W = rng.normal(size=(3, 4))
    b = rng.normal(size=3)
    _, gW, gb = lr_loss_and_grad(W, b, X, onehot, 0.1)
    h = 1e-5
    num_W = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        Wp, Wm = W.copy(), W.copy()
        Wp[idx] += h
        Wm[idx] -= h
        num_W[idx] = (lr_loss_and_grad(Wp, b, X, onehot, 0.1)[0] - lr_loss_and_grad(Wm, b, X, onehot, 0.1)[0]) / (2 * h)
    num_b = np.zeros_like(b)
    for i in range(3):
        bp, bm = b.copy(), b.copy()
        bp[i] += h
        bm[i] -= h
        num_b[i] = (lr_loss_and_grad(W, bp, X, onehot, 0.1)[0] - lr_loss_and_grad(W, bm, X, onehot, 0.1)[0]) / (2 * h)
    rel = np.abs(np.concatenate([(gW - num_W).ravel(), gb - num_b]))
    rel /= np.maximum(1e-8, np.abs(np.concatenate([num_W.ravel(), num_b])))
    assert rel.max() <= 1e-6


def test_lr_separable_blobs():
    X, y = blobs()
    m = train_logistic(ds_from(X, y))
    assert np.mean(m.predict_many(X) == y) >= 0.99


def test_lr_duplicated_rows_identical_model():
    X, y = blobs(60, seed=5, sd=1.5)
    a = train_logistic(ds_from(X, y), Hyperparams(lr_epochs=300))
    b = train_logistic(ds_from(np.vstack([X, X]), np.concatenate([y, y])), Hyperparams(lr_epochs=300))
    np.testing.assert_allclose(a.weights, b.weights, atol=1e-10)
    np.testing.assert_array_equal(a.predict_many(X), b.predict_many(X))


def test_lr_zero_weights_and_bias_shift():
    m = LRModel(np.zeros((3, 2)), np.array([0.5, 2.0, 2.0]), (-1, 0, 1))
    assert predict(m, [3.0, -1.0]) == 0
    X, y = blobs(90, seed=6, centers=((-2, 0), (0, 2), (2, 0)))
    fit = train_logistic(ds_from(X, y - 1))
    shifted = LRModel(fit.weights, fit.bias + 7.5, fit.classes)
    np.testing.assert_array_equal(fit.predict_many(X), shifted.predict_many(X))


@given(st.lists(st.floats(-500, 500), min_size=2, max_size=6))
def test_softmax_normalized(z):
    p = softmax(np.array(z))
    assert p.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(p >= 0)


def test_lr_single_class_rejected():
    with pytest.raises(LearnError, match="single class"):
        train_logistic(ds_from([[0.0], [1.0]], [1, 1]))


# --- SVM -----------------------------------------------------------------------


def test_svm_xor():
    X, y = xor()
    m = train_svm(ds_from(X, y))
    assert np.mean(m.predict_many(X) == y) >= 0.95
    lin = train_logistic(ds_from(X, y))
    assert np.mean(lin.predict_many(X) == y) < 0.8


@pytest.mark.parametrize("kind, C, data", [
    ("linear", 1e3, "blobs"), ("rbf", 1.0, "xor"), ("rbf", 10.0, "noisy"), ("linear", 0.5, "noisy"),
])
def test_svm_kkt_and_monotone_objective(kind, C, data):
    if data == "blobs":
        X, y01 = blobs(80, seed=7)
    elif data == "xor":
        X, y01 = xor(120, seed=8)
    else:
        X, y01 = blobs(100, seed=9, sd=2.0)
    y = np.where(y01 == 1, 1.0, -1.0)
    hp = Hyperparams(C=C, kernel=kind)
    gamma = 0.5
    mach, res = train_binary_svm(X, y, hp, gamma)
    K = kernel_matrix(X, X, kind, gamma)
    worst, balance = kkt_report(K, y, res.alpha, res.bias, C, hp.smo_tolerance)
    assert worst <= hp.smo_tolerance
    assert balance <= 1e-8
    assert kkt_violation(X, y, res.alpha, res.bias, C, kind, gamma) <= hp.smo_tolerance
    obj = np.asarray(res.objective)
    assert np.all(np.diff(obj) >= -1e-10)
    assert np.all((res.alpha >= 0) & (res.alpha <= C))


def test_smo_on_tiny_problem():
    # two points, one per class: both are support vectors with alpha = 2/|x1-x2|^2 (linear kernel)
    X = np.array([[0.0, 0.0], [2.0, 0.0]])
    y = np.array([-1.0, 1.0])
    res = smo_solve(X @ X.T, y, C=100.0, tol=1e-9)
    np.testing.assert_allclose(res.alpha, [0.5, 0.5], atol=1e-9)
    assert res.bias == pytest.approx(-1.0, abs=1e-9)


def test_svm_three_class_vote():
    X, y = blobs(150, seed=10, centers=((-4, 0), (0, 4), (4, 0)))
    labels = y - 1
    m = train_svm(ds_from(X, labels))
    assert len(m.machines) == 3
    assert [(mc.negative, mc.positive) for mc in m.machines] == [(-1, 0), (-1, 1), (0, 1)]
    np.testing.assert_array_equal(m.predict_many(X), labels)
    np.testing.assert_array_equal(m.predict_many(X), m.predict_many(X))


def test_svm_support_vector_gets_its_label():
    X, y = blobs(60, seed=11)
    m = train_svm(ds_from(X, y), Hyperparams(kernel="linear", C=10.0))
    sv = m.machines[0].support_vectors[0]
    row = int(np.argmin(np.abs(X - sv).sum(axis=1)))
    assert predict(m, sv) == y[row]


def test_svm_serialization_and_dim_check(tmp_path):
    X, y = blobs(40, seed=12)
    m = train_svm(ds_from(X, y))
    back = SVMModel.from_dict(m.to_dict())
    np.testing.assert_array_equal(back.predict_many(X), m.predict_many(X))
    with pytest.raises(LearnError, match="expected 2 features"):
        predict(m, [1.0, 2.0, 3.0])


def test_trained_model_roundtrip(tmp_path):
    X, y = blobs(45, seed=13, centers=((-3, 0), (0, 3), (3, 0)))
    _, scheme = kmeans_1d(X[:, 0])
    spec = FeatureSpec.parse("joy:1,fear:2")
    for est in (train_svm(ds_from(X, y)), train_logistic(ds_from(X, y))):
        tm = TrainedModel("svm" if isinstance(est, SVMModel) else "lr", "close", spec,
                          FeatureScaler.identity(2), est, scheme)
        p = tmp_path / "m.json"
        tm.save(p)
        back = TrainedModel.load(p)
        np.testing.assert_array_equal(back.predict_rows(X), tm.predict_rows(X))
        assert back.spec == spec and back.scheme == scheme
        assert set(tm.to_dict()) == {"model_type", "target", "feature_spec", "normalization", "discretization",
                                     "params"}


def test_scaler_constant_columns():
    s = FeatureScaler.fit(np.array([[1.0, 5.0], [3.0, 5.0]]))
    np.testing.assert_allclose(s.transform(np.array([[2.0, 5.0], [4.0, 6.0]])), [[0.5, 0.0], [1.5, 1.0]])


def test_hyperparams_validation():
    with pytest.raises(LearnError):
        Hyperparams(C=0)
    with pytest.raises(LearnError):
        Hyperparams(kernel="poly")
    assert Hyperparams().with_overrides(C=5.0, gamma=None).C == 5.0


def test_emotion_order_is_fixed():
    assert [e.value for e in EMOTIONS] == ["anger", "disgust", "joy", "sadness", "fear"]
