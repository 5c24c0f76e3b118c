import numpy as np
import pytest

from gridfloor.errors import CrossValidationError, FitError, SchemaError
from gridfloor.forest import (
    ForestParams,
    best_split,
    cross_validate,
    default_param_grid,
    fit_forest,
    load_forest,
    predict_forest,
    save_forest,
)


def toy_1d(n=100, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 10, size=(n, 1))
    y = np.column_stack([x[:, 0], 2.0 * x[:, 0]])
    return x, y


def brute_force_split(x, y, min_leaf=1):
    """Exhaustive (feature, midpoint-threshold) search for the best single
    split by summed per-dimension SSE reduction."""

    def sse(v):
        return float(((v - v.mean(axis=0)) ** 2).sum()) if len(v) else 0.0

    parent = sse(y)
    best = None
    for f in range(x.shape[1]):
        vals = np.unique(x[:, f])
        for a, b in zip(vals, vals[1:]):
            thr = 0.5 * (a + b)
            left = x[:, f] <= thr
            if left.sum() < min_leaf or (~left).sum() < min_leaf:
                continue
            red = parent - sse(y[left]) - sse(y[~left])
            if best is None or red > best[0]:
                best = (red, f, thr)
    return best


class TestBestSplit:
    def test_matches_brute_force_on_stumps(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            x = rng.normal(size=(20, 4))
            y = rng.normal(size=(20, 2))
            expected = brute_force_split(x, y)
            got = None
            for f in range(4):
                cand = best_split(x[:, f], y, min_leaf=1)
                if cand is not None and (got is None or cand[0] > got[0]):
                    got = (cand[0], f, cand[1])
            assert got is not None
            assert got[0] == pytest.approx(expected[0], rel=1e-9)
            assert got[1] == expected[1]
            assert got[2] == pytest.approx(expected[2])

    def test_constant_feature_has_no_split(self):
        y = np.random.default_rng(0).normal(size=(10, 2))
        assert best_split(np.ones(10), y, min_leaf=1) is None

    def test_constant_labels_have_no_split(self):
        x = np.arange(10.0)
        y = np.ones((10, 2))
        assert best_split(x, y, min_leaf=1) is None


class TestFitPredict:
    def test_single_sample_gives_leaf_forest(self):
        x = np.array([[1.0, 2.0]])
        y = np.array([[3.0, 4.0]])
        forest = fit_forest(x, y, ForestParams(n_trees=5, seed=0))
        assert np.allclose(predict_forest(forest, x), [[3.0, 4.0]])
        assert all(t.is_leaf for t in forest.trees)

    def test_perfect_fit_on_separable_toy(self):
        x, y = toy_1d()
        params = ForestParams(n_trees=1, bootstrap=False, max_depth=None, seed=0)
        forest = fit_forest(x, y, params)
        pred = predict_forest(forest, x)
        err = np.hypot(*(pred - y).T)
        assert err.mean() < 1e-6

    def test_two_tree_mean(self):
        # trees trained on single distinct samples predict their own label
        xa, ya = np.array([[0.0]]), np.array([[0.0, 0.0]])
        xb, yb = np.array([[1.0]]), np.array([[2.0, 2.0]])
        fa = fit_forest(xa, ya, ForestParams(n_trees=1, seed=0))
        fb = fit_forest(xb, yb, ForestParams(n_trees=1, seed=0))
        fa.trees.append(fb.trees[0])
        assert np.allclose(predict_forest(fa, np.array([[0.5]])), [[1.0, 1.0]])

    def test_prediction_invariant_to_tree_order(self):
        x, y = toy_1d(60, seed=1)
        forest = fit_forest(x, y, ForestParams(n_trees=8, seed=3))
        q = np.random.default_rng(2).uniform(0, 10, size=(10, 1))
        before = predict_forest(forest, q)
        forest.trees.reverse()
        assert np.allclose(predict_forest(forest, q), before)

    def test_prediction_within_label_hull(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(80, 6))
        y = rng.uniform(-2, 3, size=(80, 2))
        forest = fit_forest(x, y, ForestParams(n_trees=12, seed=1))
        pred = predict_forest(forest, rng.normal(size=(40, 6)))
        assert pred[:, 0].min() >= y[:, 0].min() and pred[:, 0].max() <= y[:, 0].max()
        assert pred[:, 1].min() >= y[:, 1].min() and pred[:, 1].max() <= y[:, 1].max()

    def test_deterministic_in_seed(self):
        x, y = toy_1d(50, seed=2)
        p = ForestParams(n_trees=4, seed=9)
        a = predict_forest(fit_forest(x, y, p), x)
        b = predict_forest(fit_forest(x, y, p), x)
        assert np.array_equal(a, b)

    def test_seed_changes_forest(self):
        x, y = toy_1d(50, seed=2)
        a = predict_forest(fit_forest(x, y, ForestParams(n_trees=4, seed=1)), x)
        b = predict_forest(fit_forest(x, y, ForestParams(n_trees=4, seed=2)), x)
        assert not np.array_equal(a, b)

    def test_empty_input(self):
        with pytest.raises(FitError):
            fit_forest(np.empty((0, 3)), np.empty((0, 2)), ForestParams())

    def test_width_mismatch(self):
        x, y = toy_1d(20)
        forest = fit_forest(x, y, ForestParams(n_trees=1, seed=0))
        with pytest.raises(SchemaError):
            predict_forest(forest, np.zeros((2, 5)))

    def test_max_depth_respected(self):
        x, y = toy_1d(200, seed=3)
        forest = fit_forest(x, y, ForestParams(n_trees=1, max_depth=2, bootstrap=False, seed=0))

        def depth(node):
            return 0 if node.is_leaf else 1 + max(depth(node.left), depth(node.right))

        assert depth(forest.trees[0]) <= 2


class TestCrossValidation:
    def test_grid_size_and_choice(self):
        x, y = toy_1d(40, seed=4)
        grid = [
            ForestParams(n_trees=t, max_depth=d, seed=0)
            for t in (2, 4)
            for d in (2, None)
        ]
        report = cross_validate(x, y, grid)
        assert report.fold_errors.shape == (4, 10)
        assert report.mean_errors.shape == (4,)
        assert report.best_index == int(np.argmin(report.mean_errors))
        assert report.best_params is grid[report.best_index]

    def test_default_grid_has_nine_combinations(self):
        grid = default_param_grid()
        assert len(grid) == 9
        assert {p.n_trees for p in grid} == {50, 100, 200}
        assert {p.max_depth for p in grid} == {8, 16, None}

    def test_folds_partition_the_samples(self):
        # contiguous blocks, disjoint, union covers everything
        n = 43
        bounds = np.linspace(0, n, 11).astype(int)
        sizes = np.diff(bounds)
        assert sizes.sum() == n
        assert sizes.min() >= n // 10
        assert sizes.max() <= n // 10 + 1

    def test_too_few_samples(self):
        x, y = toy_1d(8)
        with pytest.raises(CrossValidationError):
            cross_validate(x, y, [ForestParams(n_trees=1, seed=0)])


class TestSerialization:
    def test_round_trip(self, tmp_path):
        x, y = toy_1d(60, seed=6)
        forest = fit_forest(x, y, ForestParams(n_trees=3, max_depth=4, seed=2))
        path = tmp_path / "forest.json"
        save_forest(forest, path)
        back = load_forest(path)
        q = np.random.default_rng(1).uniform(0, 10, size=(25, 1))
        assert np.array_equal(predict_forest(back, q), predict_forest(forest, q))
        assert back.params == forest.params

    def test_version_field_required(self, tmp_path):
        import json

        x, y = toy_1d(10)
        forest = fit_forest(x, y, ForestParams(n_trees=1, seed=0))
        path = tmp_path / "forest.json"
        save_forest(forest, path)
        obj = json.load(open(path))
        assert obj["version"] == 1
        obj["version"] = 99
        path.write_text(json.dumps(obj))
        with pytest.raises(SchemaError):
            load_forest(path)