import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from esrshift.core_types import WeightVector
from esrshift.errors import AllWeightsZero, ConfigError, DimensionMismatch, EmptyInput
from esrshift.learners import (
    BoostParams,
    ForestParams,
    TrainedModel,
    TreeParams,
    bootstrap_indices,
    fit_boosted,
    fit_forest,
    fit_learner,
    fit_tree,
    predict,
    tree_seed,
)

DEEP = TreeParams(max_depth=10, min_samples_leaf=1, min_weight_leaf=0.0)


def test_constant_labels_give_single_leaf():
    X = np.arange(6.0).reshape(-1, 1)
    m = fit_tree(X, np.full(6, 3.5), [1, 2, 3, 1, 1, 5], DEEP)
    assert m.trees[0].n_nodes == 1
    assert np.all(predict(m, X) == 3.5)


def test_separable_pair():
    m = fit_tree([[0.0], [1.0]], [0.0, 10.0], None, DEEP)
    assert list(predict(m, [[0.0], [1.0]])) == [0.0, 10.0]
    assert m.trees[0].threshold[0] == 0.5


def test_weighted_leaf_mean():
    m = fit_tree([[0.0], [0.0], [1.0]], [0.0, 4.0, 10.0], [3.0, 1.0, 1.0], DEEP)
    assert predict(m, [[0.0]])[0] == 1.0
    assert predict(m, [[1.0]])[0] == 10.0


def test_errors():
    with pytest.raises(EmptyInput):
        fit_tree(np.zeros((0, 2)), [], None)
    with pytest.raises(AllWeightsZero):
        fit_tree([[0.0], [1.0]], [1.0, 2.0], [0.0, 0.0])
    with pytest.raises(DimensionMismatch):
        fit_tree([[0.0], [1.0]], [1.0, 2.0, 3.0], None)
    m = fit_tree([[0.0, 1.0], [1.0, 0.0]], [1.0, 2.0], None)
    with pytest.raises(DimensionMismatch):
        predict(m, [[0.0]])
    with pytest.raises(ConfigError):
        BoostParams(n_rounds=0)
    with pytest.raises(ConfigError):
        ForestParams(n_trees=0)
    with pytest.raises(ValueError):
        fit_learner("svm", [[0.0]], [1.0])


def _replication_case(rng):
    n, d = int(rng.integers(3, 12)), int(rng.integers(1, 4))
    X = rng.integers(0, 5, size=(n, d)).astype(float)
    y = rng.integers(0, 16, size=n) / 4.0
    w = rng.integers(0, 5, size=n)
    w[0] = max(w[0], 1)
    return X, y, w


@pytest.mark.parametrize("case", range(20))
def test_weight_replication_equivalence(case):
    rng = np.random.default_rng(1000 + case)
    X, y, w = _replication_case(rng)
    p = TreeParams(max_depth=4, min_samples_leaf=1, min_weight_leaf=0.0)
    rep = np.repeat(np.arange(len(y)), w)
    probe = rng.uniform(-1, 6, size=(100, X.shape[1]))
    a = predict(fit_tree(X, y, w.astype(float), p), probe)
    b = predict(fit_tree(X[rep], y[rep], None, p), probe)
    assert np.array_equal(a, b)


def test_uniform_weight_reduction():
    rng = np.random.default_rng(3)
    X, y = rng.normal(size=(60, 4)), rng.normal(size=60)
    ones = WeightVector(np.ones(60), b_cap=1000.0, epsilon=0.5, sigma=1.0)
    for kind in ("tree", "forest", "boosted"):
        params = {"forest": ForestParams(n_trees=5), "boosted": BoostParams(n_rounds=10)}.get(kind)
        a = fit_learner(kind, X, y, None, params=params)
        b = fit_learner(kind, X, y, ones, params=params)
        assert a.to_json() == b.to_json()


def test_tree_prediction_within_leaf_labels():
    rng = np.random.default_rng(4)
    X, y, w = rng.normal(size=(80, 3)), rng.normal(size=80), rng.uniform(0.1, 3, size=80)
    m = fit_tree(X, y, w)
    leaves = m.trees[0].apply(X)
    pred = predict(m, X)
    for leaf in np.unique(leaves):
        members = y[leaves == leaf]
        assert members.min() <= pred[leaves == leaf][0] <= members.max()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_forest_prediction_within_label_range(seed):
    rng = np.random.default_rng(seed)
    X, y = rng.normal(size=(30, 3)), rng.normal(size=30)
    w = rng.uniform(0, 2, size=30)
    w[0] = 1.0
    m = fit_forest(X, y, w, ForestParams(n_trees=4, seed=seed))
    pred = predict(m, rng.normal(scale=3, size=(50, 3)))
    assert y.min() <= pred.min() and pred.max() <= y.max()


def test_forest_single_tree_equals_tree_on_bootstrap():
    rng = np.random.default_rng(6)
    X, y = rng.normal(size=(40, 3)), rng.normal(size=40)
    p = ForestParams(n_trees=1, feature_subsample=1.0, seed=17)
    forest = fit_forest(X, y, None, p)
    idx = bootstrap_indices(np.ones(40), tree_seed(17, 0))
    tree = fit_tree(X[idx], y[idx], None, p.tree)
    probe = rng.normal(size=(100, 3))
    assert np.array_equal(predict(forest, probe), predict(tree, probe))


def test_forest_of_identical_trees_matches_one_tree():
    m = fit_tree([[0.0], [1.0], [2.0]], [1.0, 2.0, 4.0], None, DEEP)
    forest = TrainedModel("forest", m.trees * 3, 1)
    X = np.linspace(-1, 3, 9).reshape(-1, 1)
    assert np.array_equal(predict(forest, X), predict(m, X))


def test_boosted_exact_single_round():
    X = np.arange(8.0).reshape(-1, 1)
    y = np.array([3.0, -1.0, 2.0, 7.0, 0.5, 4.0, 4.0, -2.0])
    m = fit_boosted(X, y, None, BoostParams(n_rounds=1, learning_rate=1.0, tree=DEEP))
    assert np.allclose(predict(m, X), y, atol=1e-12)


def test_boosted_constant_labels():
    X = np.random.default_rng(0).normal(size=(20, 2))
    m = fit_boosted(X, np.full(20, 2.5), None, BoostParams(n_rounds=5))
    assert m.base_score == 2.5
    assert np.allclose(predict(m, X), 2.5)


def test_boosted_zero_contribution_is_base_score():
    m = TrainedModel("boosted", (), 2, base_score=1.25, learning_rate=0.1)
    assert np.all(predict(m, np.zeros((4, 2))) == 1.25)


def test_boosted_training_loss_non_increasing():
    rng = np.random.default_rng(8)
    X, y, w = rng.normal(size=(100, 4)), rng.normal(size=100), rng.uniform(0, 5, size=100)
    m = fit_boosted(X, y, w, BoostParams(n_rounds=40))
    assert np.all(np.diff(m.train_loss) <= 1e-9 * m.train_loss[0])
    assert m.base_score == pytest.approx(np.dot(w, y) / w.sum())


def test_determinism_and_json_round_trip():
    rng = np.random.default_rng(9)
    X, y, w = rng.normal(size=(50, 5)), rng.normal(size=50), rng.uniform(0, 2, size=50)
    for kind in ("forest", "boosted"):
        a = fit_learner(kind, X, y, w, seed=3)
        b = fit_learner(kind, X, y, w, seed=3)
        assert a.to_json() == b.to_json()
        back = TrainedModel.from_json(a.to_json())
        assert back.to_json() == a.to_json()
        assert np.array_equal(predict(back, X), predict(a, X))
        assert list(json.loads(a.to_json())) == ["kind", "params", "n_features", "base_score", "learning_rate", "trees"]


def test_forest_seed_changes_model():
    rng = np.random.default_rng(10)
    X, y = rng.normal(size=(50, 5)), rng.normal(size=50)
    p0, p1 = ForestParams(n_trees=3, seed=0), ForestParams(n_trees=3, seed=1)
    assert fit_forest(X, y, None, p0).to_json() != fit_forest(X, y, None, p1).to_json()


def test_zero_weight_rows_are_ignored():
    rng = np.random.default_rng(11)
    X, y = rng.normal(size=(30, 2)), rng.normal(size=30)
    w = np.ones(30)
    w[::3] = 0.0
    keep = w > 0
    a = fit_tree(X, y, w)
    b = fit_tree(X[keep], y[keep], None)
    assert a.to_json() == b.to_json()
