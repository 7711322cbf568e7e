from __future__ import annotations

import json

import numpy as np
import pytest

from voiroute.boosting import (
    GradientBoostedRegressor,
    RegressionTree,
    TrainConfig,
    best_split,
)


def brute_force_best_split(X, y, min_samples_split=2):
    """Independent oracle: enumerate every feature and every midpoint between
    consecutive distinct sorted values; minimize total squared error with
    ties to the lowest feature, then the lowest threshold."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n, d = X.shape
    if n < min_samples_split:
        return None
    base_sse = float(np.sum((y - y.mean()) ** 2))
    best = None
    best_sse = base_sse - 1e-12
    for j in range(d):
        vals = np.unique(X[:, j])
        for lo, hi in zip(vals, vals[1:]):
            thr = (lo + hi) / 2.0
            if not (lo <= thr < hi):
                thr = lo
            left = y[X[:, j] <= thr]
            right = y[X[:, j] > thr]
            sse = float(np.sum((left - left.mean()) ** 2)) + float(
                np.sum((right - right.mean()) ** 2)
            )
            if sse < best_sse:
                best_sse = sse
                best = (j, thr)
    return best


def test_split_two_points():
    split = best_split(np.array([[0.0], [1.0]]), np.array([0.0, 1.0]))
    assert split == (0, 0.5)


def test_split_constant_targets_is_none():
    assert best_split(np.array([[0.0], [1.0], [2.0]]), np.array([0.7, 0.7, 0.7])) is None


def test_split_step_at_one_and_a_half():
    split = best_split(np.array([[0.0], [1.0], [2.0]]), np.array([0.0, 0.0, 1.0]))
    assert split == (0, 1.5)
    assert split == brute_force_best_split([[0.0], [1.0], [2.0]], [0.0, 0.0, 1.0])


def test_split_requires_min_samples():
    assert best_split(np.array([[0.0]]), np.array([1.0])) is None
    assert (
        best_split(np.array([[0.0], [1.0]]), np.array([0.0, 1.0]), min_samples_split=3)
        is None
    )


def test_split_restricted_feature_set():
    X = np.array([[0.0, 5.0], [1.0, 5.0], [2.0, 6.0]])
    y = np.array([0.0, 0.0, 1.0])
    assert best_split(X, y, features=[1]) == (1, 5.5)
    assert best_split(X, y, features=[0]) == (0, 1.5)


def test_split_matches_brute_force_on_random_data():
    rng = np.random.default_rng(5)
    for trial in range(120):
        n = int(rng.integers(2, 14))
        d = int(rng.integers(1, 5))
        # coarse grids force ties so the tie-breaking rule is exercised
        X = rng.integers(0, 3, size=(n, d)).astype(float)
        y = rng.integers(0, 2, size=n).astype(float)
        ours = best_split(X, y)
        oracle = brute_force_best_split(X, y)
        if oracle is None:
            assert ours is None
        else:
            assert ours is not None
            assert ours[0] == oracle[0]
            assert ours[1] == pytest.approx(oracle[1], abs=1e-12)


def test_kernel_and_numpy_paths_agree():
    from voiroute import boosting

    if not boosting._HAVE_NUMBA:
        pytest.skip("numba not available; only one split path exists")
    rng = np.random.default_rng(17)
    for _ in range(60):
        n = int(rng.integers(2, 40))
        d = int(rng.integers(1, 6))
        X = np.ascontiguousarray(rng.integers(0, 4, size=(n, d)).astype(float))
        y = rng.normal(size=n)
        XT = np.ascontiguousarray(X.T)
        order = np.argsort(XT, axis=1, kind="stable")
        vals = np.take_along_axis(XT, order, axis=1)
        ref = boosting._best_split_sorted(vals, y[order], np.arange(d))
        total = float(y[order[0]].sum())
        j, pos = boosting._scan_split_kernel(XT, y, order, total, boosting._MIN_GAIN)
        if ref is None:
            assert j == -1
        else:
            lo = float(XT[j, order[j, pos]])
            hi = float(XT[j, order[j, pos + 1]])
            assert (j, boosting._midpoint(lo, hi)) == ref


def test_constant_targets_predict_exactly_the_mean():
    X = np.arange(12, dtype=float).reshape(6, 2)
    y = np.full(6, 0.7)
    model = GradientBoostedRegressor(n_estimators=25).fit(X, y)
    pred = model.predict(X)
    assert np.all(pred == pred[0])
    assert pred[0] == pytest.approx(0.7, abs=1e-12)


def test_zero_estimators_predicts_target_mean():
    X = np.array([[0.0], [1.0], [2.0]])
    y = np.array([0.0, 1.0, 0.5])
    model = GradientBoostedRegressor(n_estimators=0).fit(X, y)
    assert np.all(model.predict(X) == y.mean())


def test_single_stump_learning_rate_one_recovers_step():
    X = np.array([[-1.0], [-0.5], [0.5], [1.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    model = GradientBoostedRegressor(n_estimators=1, learning_rate=1.0, max_depth=1).fit(X, y)
    assert model.predict(X) == pytest.approx([0.0, 0.0, 1.0, 1.0], abs=1e-12)


def test_single_leaf_tree_prediction_is_base_plus_scaled_value():
    tree = RegressionTree.from_dict({"value": 3.0})
    model = GradientBoostedRegressor(learning_rate=0.1)
    model.base_value_ = 0.4
    model.n_features_in_ = 1
    model.trees_ = [tree]
    assert model.predict(np.array([[123.0]])) == pytest.approx([0.4 + 0.1 * 3.0])


def test_training_loss_non_increasing_per_round():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 3))
    y = (X[:, 0] + 0.3 * X[:, 1] > 0).astype(float)
    model = GradientBoostedRegressor(n_estimators=30).fit(X, y)
    pred = np.full(40, model.base_value_)
    losses = [float(np.mean((y - pred) ** 2))]
    for tree in model.trees_:
        pred = pred + model.learning_rate * tree.predict(X)
        losses.append(float(np.mean((y - pred) ** 2)))
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
    assert losses[-1] < losses[0]


def test_separable_toy_predictions_approach_targets():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    short = GradientBoostedRegressor(n_estimators=5).fit(X, y).predict(X)
    long = GradientBoostedRegressor(n_estimators=80).fit(X, y).predict(X)
    assert np.mean((y - long) ** 2) < np.mean((y - short) ** 2)
    assert long == pytest.approx(y, abs=0.01)


def test_depth_cap_respected():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(200, 4))
    y = rng.integers(0, 2, size=200).astype(float)
    model = GradientBoostedRegressor(n_estimators=3, max_depth=2).fit(X, y)

    def depth(node):
        if "value" in node:
            return 0
        return 1 + max(depth(node["left"]), depth(node["right"]))

    for tree in model.trees_:
        assert depth(tree.to_dict()) <= 2


def test_predict_is_pure_and_deterministic():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(50, 3))
    y = rng.integers(0, 2, size=50).astype(float)
    model = GradientBoostedRegressor(n_estimators=10).fit(X, y)
    a = model.predict(X)
    b = model.predict(X)
    assert np.array_equal(a, b)
    again = GradientBoostedRegressor(n_estimators=10).fit(X, y)
    assert np.array_equal(a, again.predict(X))


def test_json_round_trip_is_prediction_identical(tmp_path):
    rng = np.random.default_rng(3)
    X = rng.normal(size=(60, 5))
    y = (X[:, 0] > 0).astype(float)
    model = GradientBoostedRegressor(n_estimators=12).fit(X, y)
    path = tmp_path / "model.json"
    model.save(path)
    loaded = GradientBoostedRegressor.load(path)
    X2 = rng.normal(size=(30, 5))
    assert np.array_equal(model.predict(X2), loaded.predict(X2))
    # the payload is plain JSON with nested tree dicts
    obj = json.loads(path.read_text())
    assert set(obj) == {"base_value", "learning_rate", "n_features", "trees"}


def test_dimension_mismatch_rejected():
    model = GradientBoostedRegressor(n_estimators=1).fit(
        np.array([[0.0], [1.0]]), np.array([0.0, 1.0])
    )
    with pytest.raises(ValueError):
        model.predict(np.zeros((2, 3)))


def test_empty_training_set_rejected():
    with pytest.raises(ValueError):
        GradientBoostedRegressor().fit(np.zeros((0, 2)), np.zeros(0))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(n_estimators=-1)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(max_depth=0)
    with pytest.raises(ValueError):
        TrainConfig(min_samples_split=1)
    assert TrainConfig().to_estimator().get_params()["n_estimators"] == 100


def test_estimator_defaults_match_shipped_configuration():
    params = GradientBoostedRegressor().get_params()
    assert params["n_estimators"] == 100
    assert params["learning_rate"] == 0.1
    assert params["max_depth"] == 3
    assert params["min_samples_split"] == 2
