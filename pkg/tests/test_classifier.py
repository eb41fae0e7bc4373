import numpy as np
import pytest
from scipy.optimize import minimize

from tardis.classifier import (
    ClassifierModel,
    TrainConfig,
    gradient_check,
    loss_and_grad,
    predict_label,
    predict_proba,
    train,
)
from tardis.errors import DimensionMismatch, SingleClassTrainingSet


def separable_1d():
    x = np.array([[-1.0], [-1.2], [-0.8], [1.0], [1.1], [0.9]])
    y = np.array([0, 0, 0, 1, 1, 1])
    return x, y


def test_separable_direction():
    x, y = separable_1d()
    model = train(x, y)
    assert predict_proba(model, np.array([1.0])) > 0.5
    assert predict_proba(model, np.array([-1.0])) < 0.5


def test_zero_weights_predict_half():
    x, y = separable_1d()
    model = train(x, y, TrainConfig(max_iter=1))
    zeroed = ClassifierModel(
        weights=np.zeros(1),
        bias=0.0,
        feature_mean=model.feature_mean,
        feature_std=model.feature_std,
    )
    for v in (-3.0, 0.0, 5.0):
        assert predict_proba(zeroed, np.array([v])) == 0.5


def test_initial_loss_is_log2():
    # zero init means p = 0.5 for every row: loss starts at ln 2
    x, y = separable_1d()
    model = train(x, y)
    assert model.loss_history[0] == pytest.approx(np.log(2.0))


def test_loss_matches_convex_oracle():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 4))
    w_true = np.array([2.0, -1.0, 0.5, 0.0])
    y = (x @ w_true + 0.1 * rng.normal(size=50) > 0).astype(int)
    cfg = TrainConfig(max_iter=500)
    model = train(x, y, cfg)

    xs = (x - model.feature_mean) / model.feature_std
    l2 = 1.0 / 50

    def objective(theta):
        return loss_and_grad(xs, y.astype(float), theta[:-1], theta[-1], l2)[0]

    def grad(theta):
        _, gw, gb = loss_and_grad(xs, y.astype(float), theta[:-1], theta[-1], l2)
        return np.append(gw, gb)

    oracle = minimize(objective, np.zeros(5), jac=grad, method="L-BFGS-B", tol=1e-12)
    assert model.loss_history[-1] == pytest.approx(oracle.fun, abs=1e-4)


def test_loss_non_increasing():
    rng = np.random.default_rng(1)
    for seed in range(5):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(40, 3))
        y = rng.integers(0, 2, size=40)
        y[0], y[1] = 0, 1
        model = train(x, y)
        diffs = np.diff(model.loss_history)
        assert (diffs <= 0.0).all()


def test_single_class_rejected():
    with pytest.raises(SingleClassTrainingSet):
        train(np.zeros((4, 2)), np.zeros(4))


def test_label_length_mismatch():
    with pytest.raises(DimensionMismatch):
        train(np.zeros((4, 2)), np.array([0, 1, 0]))


def test_row_permutation_gives_identical_model():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(30, 3))
    y = rng.integers(0, 2, size=30)
    y[:2] = [0, 1]
    model_a = train(x, y)
    perm = rng.permutation(30)
    model_b = train(x[perm], y[perm])
    np.testing.assert_allclose(model_a.weights, model_b.weights, rtol=0, atol=1e-12)
    assert model_a.bias == pytest.approx(model_b.bias, abs=1e-12)


def test_standardization_invariance():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(40, 3))
    y = (x[:, 0] > 0).astype(int)
    model = train(x, y)
    scaled = x.copy()
    scaled[:, 1] = 100.0 * scaled[:, 1] - 7.0  # affine-rescale one column
    model_scaled = train(scaled, y)
    probe = rng.normal(size=(10, 3))
    probe_scaled = probe.copy()
    probe_scaled[:, 1] = 100.0 * probe_scaled[:, 1] - 7.0
    np.testing.assert_allclose(
        predict_proba(model, probe), predict_proba(model_scaled, probe_scaled), atol=1e-6
    )


def test_zero_variance_feature_gets_unit_std():
    x = np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0], [4.0, 5.0]])
    y = np.array([0, 0, 1, 1])
    model = train(x, y)
    assert model.feature_std[1] == 1.0
    assert np.isfinite(model.weights).all()


# --- prediction ----------------------------------------------------------------

def test_predict_label_threshold_boundary():
    model = ClassifierModel(
        weights=np.zeros(1), bias=0.0, feature_mean=np.zeros(1), feature_std=np.ones(1)
    )
    assert predict_proba(model, np.zeros(1)) == 0.5
    assert predict_label(model, np.zeros(1)) == 1  # 0.5 >= 0.5
    model.threshold = 0.5001
    assert predict_label(model, np.zeros(1)) == 0
    model.threshold = 0.9
    model.bias = 1.4  # proba ~ 0.80
    assert predict_proba(model, np.zeros(1)) < 0.9
    assert predict_label(model, np.zeros(1)) == 0


def test_batch_predict_equals_per_sample():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(25, 3))
    y = (x.sum(axis=1) > 0).astype(int)
    model = train(x, y)
    probe = rng.normal(size=(12, 3))
    batch = predict_proba(model, probe)
    singles = np.array([predict_proba(model, row) for row in probe])
    # batch matmul may reassociate sums vs the per-row dot; agreement to 1e-12
    np.testing.assert_allclose(batch, singles, rtol=0, atol=1e-12)


def test_monotone_in_logit():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(30, 2))
    y = (x[:, 0] > 0).astype(int)
    model = train(x, y)
    line = np.linspace(-5, 5, 50)
    probas = predict_proba(model, np.column_stack([line, np.zeros(50)]))
    logits = ((np.column_stack([line, np.zeros(50)]) - model.feature_mean)
              / model.feature_std) @ model.weights + model.bias
    order = np.argsort(logits)
    assert (np.diff(probas[order]) >= 0).all()


def test_predict_dimension_mismatch():
    model = ClassifierModel(
        weights=np.zeros(3), bias=0.0, feature_mean=np.zeros(3), feature_std=np.ones(3)
    )
    with pytest.raises(DimensionMismatch):
        predict_proba(model, np.zeros(4))


def test_model_json_roundtrip(tmp_path):
    x, y = separable_1d()
    model = train(x, y, trained_on="oracle")
    model.save(tmp_path / "g.json")
    loaded = ClassifierModel.load(tmp_path / "g.json")
    np.testing.assert_array_equal(loaded.weights, model.weights)
    assert loaded.trained_on == "oracle"
    probe = np.array([0.37])
    assert predict_proba(loaded, probe) == predict_proba(model, probe)


# --- gradient check -------------------------------------------------------------

def test_gradient_check_small_instances():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(10, 3))
    y = rng.integers(0, 2, size=10).astype(float)
    w = rng.normal(size=3)
    err = gradient_check(x, y, w, bias=0.3, l2_lambda=0.05)
    assert err <= 1e-4


def test_gradient_zero_features():
    x = np.zeros((8, 3))
    y = np.array([0, 1, 0, 1, 0, 1, 0, 1], dtype=float)
    _, gw, gb = loss_and_grad(x, y, np.zeros(3), 0.0, 0.0)
    np.testing.assert_array_equal(gw, np.zeros(3))
    assert gb == pytest.approx(0.0)  # balanced labels: residuals cancel
    _, gw2, gb2 = loss_and_grad(x, np.ones(8), np.zeros(3), 0.0, 0.0)
    assert gb2 == pytest.approx(-0.5)  # all-ones labels pull the bias up


def test_duplicate_rows_contribute_identically():
    row = np.array([0.5, -1.0])
    x = np.vstack([row, row])
    y = np.array([1.0, 1.0])
    _, gw_pair, gb_pair = loss_and_grad(x, y, np.array([0.1, 0.2]), 0.0, 0.0)
    _, gw_one, gb_one = loss_and_grad(row[None], y[:1], np.array([0.1, 0.2]), 0.0, 0.0)
    np.testing.assert_allclose(gw_pair, gw_one)
    assert gb_pair == pytest.approx(gb_one)
