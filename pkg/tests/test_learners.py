import numpy as np
import pytest

from orchardcast.errors import NumericalError, SchemaError
from orchardcast.learners import (
    ForestConfig,
    GBDTConfig,
    RidgeConfig,
    fit,
    grow_tree,
    predict,
    r2_score,
    rmse,
)
from orchardcast.learners.ridge import fit_ridge


def brute_force_r2(y, yhat):
    """Independent oracle: explicit sums of squares."""
    mean = sum(y) / len(y)
    ss_tot = sum((v - mean) ** 2 for v in y)
    ss_res = sum((a - b) ** 2 for a, b in zip(y, yhat))
    return 1.0 - ss_res / ss_tot


def brute_force_rmse(y, yhat):
    return (sum((a - b) ** 2 for a, b in zip(y, yhat)) / len(y)) ** 0.5


def stump_oracle(X, y):
    """Exhaustive depth-1 split search over all features and midpoints."""
    n, p = X.shape
    best = None
    for j in range(p):
        values = sorted(set(X[:, j]))
        for lo, hi in zip(values, values[1:]):
            thr = (lo + hi) / 2
            left = y[X[:, j] < thr]
            right = y[X[:, j] >= thr]
            sse = ((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum()
            key = (sse, j, thr)
            if best is None or key < best[0]:
                best = (key, j, thr, left.mean(), right.mean())
    return best[1:]


class TestMetrics:
    def test_hand_values(self):
        assert r2_score([1, 2, 3], [1, 2, 4]) == pytest.approx(0.5)
        assert rmse([1, 2, 3], [1, 2, 4]) == pytest.approx(np.sqrt(1 / 3))
        assert r2_score([1, 2, 3], [1, 2, 3]) == 1.0
        assert rmse([1, 2, 3], [1, 2, 3]) == 0.0

    def test_mean_predictor_scores_zero(self):
        y = np.array([1.0, 4.0, -2.0, 3.0])
        assert r2_score(y, np.full(4, y.mean())) == pytest.approx(0.0)

    def test_uniform_bias_rmse(self):
        y = np.array([1.0, 4.0, -2.0])
        assert rmse(y, y + 0.7) == pytest.approx(0.7)

    def test_randomized_against_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            n = rng.integers(2, 12)
            y = rng.normal(size=n)
            yhat = y + rng.normal(scale=0.5, size=n)
            if np.ptp(y) == 0:
                continue
            assert r2_score(y, yhat) == pytest.approx(brute_force_r2(y, yhat), abs=1e-12)
            assert rmse(y, yhat) == pytest.approx(brute_force_rmse(y, yhat), abs=1e-12)

    def test_constant_y_is_undefined(self):
        with pytest.raises(NumericalError):
            r2_score([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])

    def test_length_mismatch(self):
        with pytest.raises(SchemaError):
            rmse([1.0, 2.0], [1.0])


class TestRidge:
    def test_exact_least_squares(self):
        model = fit(RidgeConfig(lam=0.0), np.array([[0.0], [1.0]]), np.array([0.0, 1.0]))
        assert model.coef[0] == pytest.approx(1.0, abs=1e-12)
        assert model.intercept == pytest.approx(0.0, abs=1e-12)
        assert predict(model, np.array([[0.5]]))[0] == pytest.approx(0.5)

    def test_interpolates_when_unregularized(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(5, 4))
        y = rng.normal(size=5)
        model = fit(RidgeConfig(lam=0.0), X, y)
        assert np.allclose(model.predict(X), y, atol=1e-8)

    def test_singular_advises_regularization(self):
        X = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        with pytest.raises(NumericalError, match="lam > 0"):
            fit(RidgeConfig(lam=0.0), X, np.array([1.0, 2.0, 3.0]))

    def test_constant_target_gives_constant_model(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(10, 3))
        model = fit(RidgeConfig(lam=1.0), X, np.full(10, 4.5))
        assert np.allclose(model.predict(X), 4.5, atol=1e-10)

    def test_shrinkage_monotone_in_lambda(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(40, 6))
        y = X @ rng.normal(size=6) + rng.normal(scale=0.3, size=40)
        norms = [
            np.linalg.norm(fit_ridge(X, y, lam).coef)
            for lam in [0.0, 0.1, 1.0, 10.0, 100.0, 1e4]
        ]
        assert all(a >= b - 1e-12 for a, b in zip(norms, norms[1:]))

    def test_gradient_zero_at_solution(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(30, 5))
        y = rng.normal(size=30)
        for lam in [0.0, 0.5, 5.0]:
            model = fit_ridge(X, y, lam)
            residual = X @ model.coef + model.intercept - y
            grad_w = X.T @ residual + lam * model.coef
            assert np.abs(grad_w).max() < 1e-8
            assert abs(residual.sum()) < 1e-8  # intercept optimality

    def test_empty_predict(self):
        model = fit(RidgeConfig(lam=1.0), np.eye(3), np.arange(3.0))
        assert predict(model, np.empty((0, 3))).shape == (0,)


class TestTrees:
    def test_depth_one_matches_oracle(self):
        X = np.array([[0.0], [1.0]])
        y = np.array([0.0, 1.0])
        tree = grow_tree(X, y, np.arange(2), max_depth=1, min_leaf=1)
        j, thr, left_mean, right_mean = stump_oracle(X, y)
        assert tree.feature[0] == j
        assert tree.threshold[0] == pytest.approx(thr)
        assert tree.predict(np.array([[0.2]]))[0] == pytest.approx(left_mean)
        assert tree.predict(np.array([[0.7]]))[0] == pytest.approx(right_mean)

    def test_depth_one_matches_oracle_randomized(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            X = rng.normal(size=(rng.integers(4, 20), rng.integers(1, 5)))
            y = rng.normal(size=len(X))
            tree = grow_tree(X, y, np.arange(len(X)), max_depth=1, min_leaf=1)
            j, thr, _, _ = stump_oracle(X, y)
            assert tree.feature[0] == j
            assert tree.threshold[0] == pytest.approx(thr)

    def test_tie_break_prefers_lowest_feature(self):
        # duplicate feature: identical gains, the lower column index must win
        X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        y = np.array([0.0, 0.0, 1.0, 1.0])
        tree = grow_tree(X, y, np.arange(4), max_depth=1, min_leaf=1)
        assert tree.feature[0] == 0

    def test_min_leaf_respected(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        tree = grow_tree(X, y, np.arange(30), max_depth=None, min_leaf=5)
        counts = np.zeros(tree.n_nodes, dtype=int)
        leaf_of = np.zeros(30, dtype=int)
        for i in range(30):
            node = 0
            while tree.feature[node] != -1:
                node = tree.left[node] if X[i, tree.feature[node]] < tree.threshold[node] else tree.right[node]
            leaf_of[i] = node
        for node, count in zip(*np.unique(leaf_of, return_counts=True)):
            assert count >= 5


class TestForest:
    def test_constant_target(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(20, 3))
        model = fit(ForestConfig(n_trees=10), X, np.full(20, 2.0))
        assert np.allclose(model.predict(X), 2.0)

    def test_forest_of_identical_trees_equals_one_tree(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(25, 3))
        y = rng.normal(size=25)
        # no bootstrap + all features: every tree is identical
        model = fit(ForestConfig(n_trees=5, bootstrap=False, feature_fraction=1.0), X, y)
        single = fit(ForestConfig(n_trees=1, bootstrap=False, feature_fraction=1.0), X, y)
        assert np.array_equal(model.predict(X), single.predict(X))

    def test_same_seed_bit_identical(self):
        rng = np.random.default_rng(12)
        X = rng.normal(size=(40, 5))
        y = rng.normal(size=40)
        a = fit(ForestConfig(n_trees=12, seed=7), X, y)
        b = fit(ForestConfig(n_trees=12, seed=7), X, y)
        for ta, tb in zip(a.trees, b.trees):
            assert np.array_equal(ta.feature, tb.feature)
            assert np.array_equal(ta.threshold, tb.threshold)
            assert np.array_equal(ta.value, tb.value)
        c = fit(ForestConfig(n_trees=12, seed=8), X, y)
        assert not np.array_equal(a.predict(X), c.predict(X))

    def test_feature_permutation_consistency(self):
        # shallow trees on wide nodes: no split ties, so permuting columns
        # consistently must only relabel them
        rng = np.random.default_rng(13)
        X = rng.normal(size=(100, 4))
        y = X[:, 0] * 2 + np.sin(X[:, 1]) + 0.05 * rng.normal(size=100)
        perm = np.array([2, 0, 3, 1])
        cfg = dict(n_trees=3, bootstrap=False, feature_fraction=1.0, max_depth=3, min_leaf=10, seed=1)
        a = fit(ForestConfig(**cfg), X, y)
        b = fit(ForestConfig(**cfg), X[:, perm], y)
        X_new = rng.normal(size=(20, 4))
        assert np.allclose(a.predict(X_new), b.predict(X_new[:, perm]))

    def test_arity_mismatch(self):
        model = fit(ForestConfig(n_trees=2), np.eye(4), np.arange(4.0))
        with pytest.raises(SchemaError):
            model.predict(np.eye(3))


class TestGBDT:
    def test_constant_target(self):
        rng = np.random.default_rng(14)
        X = rng.normal(size=(20, 3))
        model = fit(GBDTConfig(n_rounds=5), X, np.full(20, -1.5))
        assert np.allclose(model.predict(X), -1.5)

    def test_training_rmse_non_increasing(self):
        rng = np.random.default_rng(15)
        X = rng.normal(size=(60, 4))
        y = X[:, 0] - 2 * X[:, 1] ** 2 + 0.1 * rng.normal(size=60)
        model = fit(GBDTConfig(n_rounds=40, row_subsample=1.0, learning_rate=0.2), X, y)
        current = np.full(len(y), model.base)
        errors = [rmse(y, current)]
        for tree in model.trees:
            current = current + model.learning_rate * tree.predict(X)
            errors.append(rmse(y, current))
        assert all(a >= b - 1e-12 for a, b in zip(errors, errors[1:]))

    def test_same_seed_bit_identical_predictions(self):
        rng = np.random.default_rng(16)
        X = rng.normal(size=(50, 4))
        y = rng.normal(size=50)
        a = fit(GBDTConfig(n_rounds=20, seed=3), X, y)
        b = fit(GBDTConfig(n_rounds=20, seed=3), X, y)
        assert np.array_equal(a.predict(X), b.predict(X))


def test_missing_values_rejected():
    X = np.array([[1.0, np.nan], [2.0, 3.0]])
    with pytest.raises(SchemaError, match="finite"):
        fit(RidgeConfig(), X, np.array([1.0, 2.0]))
