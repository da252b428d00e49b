import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_tree, random_dataset, same_tree, tree_as_tuples

from cpsbench.analysis import TrialData
from cpsbench.control import run_params
from cpsbench.mlcore import (
    ForestParams,
    evaluate,
    feature_importance,
    fit_tree,
    kfold_stratified,
    regression_metrics,
    train_forest,
    train_tree,
)
from cpsbench.mlcore.dataset import assemble
from cpsbench.program import ExperimentParams


def test_separable_pair():
    X = np.array([[0.0], [1.0]])
    t = fit_tree(X, [0.0, 10.0], max_depth=1, min_leaf=1)
    assert list(t.predict(X)) == [0.0, 10.0]
    assert t.threshold[0] == 0.5


def test_constant_target_single_leaf():
    t = train_tree(np.random.default_rng(0).random((20, 3)), np.full(20, 7.0))
    assert t.n_nodes == 1 and t.value[0] == 7.0


def test_empty_matrix():
    with pytest.raises(ValueError):
        train_tree(np.zeros((0, 2)), np.zeros(0))


def test_tie_breaks_lowest_feature_then_threshold():
    # Both features separate y identically; feature 0 must win.
    X = np.array([[0, 0], [1, 1], [2, 2], [3, 3]], float)
    t = fit_tree(X, [0, 0, 5, 5], max_depth=1, min_leaf=1)
    assert t.feature[0] == 0 and t.threshold[0] == 1.5
    # Symmetric target: splits at 0.5 and 2.5 tie; the lower threshold wins.
    t = fit_tree(np.array([[0], [1], [2], [3]], float), [0, 5, 5, 0], max_depth=1, min_leaf=1)
    assert t.threshold[0] == 0.5


def test_oracle_30_rows_depth_3():
    rng = np.random.default_rng(7)
    X = rng.random((30, 4))
    y = rng.normal(size=30)
    for depth in (1, 2, 3):
        got = tree_as_tuples(train_tree(X, y, depth, 1).node())
        assert same_tree(got, brute_tree(X, y, depth, 1))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 3))
def test_oracle_property(seed, depth, min_leaf):
    X, y = random_dataset(np.random.default_rng(seed))
    got = tree_as_tuples(train_tree(X, y, depth, min_leaf).node())
    assert same_tree(got, brute_tree(X, y, depth, min_leaf))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_leaf_means_are_training_means(seed):
    X, y = random_dataset(np.random.default_rng(seed))
    t = train_tree(X, y, 3, 1)
    leaves = t.predict(X)
    for v in np.unique(leaves):
        assert v == pytest.approx(y[leaves == v].mean())


def test_degenerate_forest_equals_tree():
    rng = np.random.default_rng(1)
    X, y = rng.random((80, 3)), rng.normal(size=80)
    f = train_forest(X, y, ForestParams(n_trees=1, bootstrap=False, feature_frac=1.0))
    assert np.array_equal(f.predict(X), train_tree(X, y).predict(X))


def test_forest_mean_of_trees_and_seeded():
    rng = np.random.default_rng(2)
    X, y = rng.random((100, 4)), rng.normal(size=100)
    f = train_forest(X, y, ForestParams(n_trees=7, feature_frac=0.5, seed=3))
    stacked = np.stack([t.predict(X) for t in f.trees])
    assert np.array_equal(f.predict(X), np.mean(stacked, axis=0))
    g = train_forest(X, y, ForestParams(n_trees=7, feature_frac=0.5, seed=3))
    assert np.array_equal(f.predict(X), g.predict(X))
    et = train_forest(X, y, ForestParams(n_trees=5, extra_random=True, bootstrap=False, seed=3))
    assert not np.array_equal(et.predict(X), f.predict(X))


def test_forest_beats_tree_on_noisy_data():
    rng = np.random.default_rng(0)
    X = rng.random((400, 3))
    y = np.sin(6 * X[:, 0]) + X[:, 1] + rng.normal(0, 0.3, 400)
    tr, te = slice(0, 200), slice(200, 400)
    f = train_forest(X[tr], y[tr], ForestParams(n_trees=50, seed=1))
    t = train_tree(X[tr], y[tr])
    mse = lambda m: np.mean((m.predict(X[te]) - y[te]) ** 2)
    assert mse(f) <= mse(t)


def test_feature_frac_validation():
    with pytest.raises(ValueError):
        ForestParams(feature_frac=0)
    with pytest.raises(ValueError):
        ForestParams(feature_frac=1.5)
    with pytest.raises(ValueError):
        ForestParams(n_trees=0)


def test_importance():
    rng = np.random.default_rng(0)
    X = rng.random((200, 3))
    y = 3 * X[:, 1] + rng.normal(0, 0.01, 200)
    f = train_forest(X, y, ForestParams(n_trees=5, max_depth=1, seed=0))
    w = feature_importance(f, ["a", "b", "c"])
    assert w["b"] == 1.0 and w["a"] == 0.0
    w1 = feature_importance(train_forest(X[:, :1], y, ForestParams(n_trees=3)))
    assert w1 == {"x0": 1.0}
    w3 = feature_importance(train_forest(X, y, ForestParams(n_trees=5, seed=1)))
    assert sum(w3.values()) == pytest.approx(1.0, abs=1e-9)
    assert all(v >= 0 for v in w3.values())


def test_kfold_even_division():
    folds = kfold_stratified(["a"] * 5 + ["b"] * 5, k=5, seed=0)
    for f in range(5):
        members = [i for i in range(10) if folds[i] == f]
        assert sorted(i < 5 for i in members) == [False, True]


def test_kfold_small_strata():
    strata = [s for s in "abcd" for _ in range(2)]
    folds = kfold_stratified(strata, k=2, seed=1)
    for f in (0, 1):
        assert sorted(s for s, g in zip(strata, folds) if g == f) == list("abcd")


def test_kfold_deterministic_and_warns(caplog):
    strata = [i % 3 for i in range(20)]
    assert np.array_equal(kfold_stratified(strata, 5, 9), kfold_stratified(strata, 5, 9))
    with caplog.at_level(logging.WARNING):
        folds = kfold_stratified([0, 0, 1], k=3)
    assert "smallest stratum" in caplog.text
    assert sorted(folds) == [0, 1, 2]
    with pytest.raises(ValueError):
        kfold_stratified(strata, k=1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=5, max_size=200), st.integers(2, 6), st.integers(0, 99))
def test_kfold_balance(strata, k, seed):
    folds = kfold_stratified(strata, k, seed)
    for s in set(strata):
        counts = np.bincount(folds[np.array(strata) == s], minlength=k)
        assert counts.max() - counts.min() <= 1
    sizes = np.bincount(folds, minlength=k)
    assert sizes.max() - sizes.min() <= 1


def test_metric_examples():
    r = regression_metrics([10, 20], [11, 18])
    assert r.mape == pytest.approx(0.1) and r.mae == pytest.approx(1.5)
    p = regression_metrics([3.0, 4.0, 5.0], [3.0, 4.0, 5.0])
    assert (p.mae, p.mse, p.rmsle, p.mape, p.r2) == (0, 0, 0, 0, 1)
    y = np.array([1.0, 2.0, 6.0])
    assert regression_metrics(y, np.full(3, y.mean())).r2 == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        regression_metrics([0.0, 1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        regression_metrics([-2.0, 1.0], [1.0, 1.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0.1, 1e3), st.floats(0.1, 1e3)), min_size=2, max_size=50),
       st.randoms())
def test_metric_identities(pairs, rnd):
    y, yh = map(np.array, zip(*pairs))
    r = regression_metrics(y, yh)
    assert r.rmse ** 2 == pytest.approx(r.mse, rel=1e-9)
    assert regression_metrics(y, y).r2 == 1.0
    perm = list(range(len(y)))
    rnd.shuffle(perm)
    r2 = regression_metrics(y[perm], yh[perm])
    for k, v in r.as_dict().items():
        assert getattr(r2, k) == pytest.approx(v, rel=1e-9, abs=1e-12)


def test_evaluate_averages_folds():
    rng = np.random.default_rng(0)
    X = rng.random((50, 2))
    y = 5 + X[:, 0]
    folds = kfold_stratified([0] * 50, 5, 0)
    mean, per = evaluate(lambda a, b: train_tree(a, b, 4, 2), X, y, folds)
    assert len(per) == 5
    assert mean.mae == pytest.approx(np.mean([p.mae for p in per]))
    assert mean.rmse == pytest.approx(np.mean([p.rmse for p in per]))


def test_assemble_shapes(tmp_path):
    p = ExperimentParams("sorting", rounds=3, seed=2)
    log = run_params(p)
    trial = TrialData(p, log.rows, log.rounds)
    dm = assemble("power_state", [trial])
    assert dm.shape == (len(log.rows), 12)
    assert assemble("round_energy", [trial]).shape == (3, 4)
    assert assemble("round_duration", [trial]).feature_names == (
        "velocity_pct", "acceleration_pct", "belt_speed", "payload_g")
    log.write(tmp_path, "t")
    assert assemble("power_state", tmp_path / "t.csv").shape == dm.shape
    assert assemble("round_energy", tmp_path / "t.rounds.csv").shape == (3, 4)
    with pytest.raises(ValueError, match="missing column"):
        assemble("round_energy", tmp_path / "t.csv")
    with pytest.raises(ValueError, match="unknown task"):
        assemble("colour", [trial])


def test_tree_dump():
    t = fit_tree(np.array([[0.0], [1.0]]), [0.0, 10.0], max_depth=1, min_leaf=1)
    assert t.dump(["v"]).splitlines()[0] == "v <= 0.5 n=2"
