"""Learner oracles: tree splits against exhaustive search, forest/tree
reduction, hand-computed Gaussian posteriors, boundary behavior of the
linear models, AdaBoost on separable data, serialization."""

import numpy as np
import pytest

from tunnelscope import learners
from tunnelscope.errors import (
    DegenerateTrainingError,
    InvalidModelInputError,
    UnsupportedModelError,
)
from tunnelscope.learners.trees import build_tree


def brute_force_best_split(X, y, criterion="gini"):
    """Exhaustive (feature, midpoint) search, scanning features then
    thresholds in ascending order, strict improvement only."""
    n, d = X.shape
    classes = np.unique(y)
    best = None  # (cost, feature, threshold)
    for f in range(d):
        vals = np.sort(np.unique(X[:, f]))
        for lo, hi in zip(vals[:-1], vals[1:]):
            thr = (lo + hi) / 2.0
            if thr >= hi:
                thr = lo
            left = X[:, f] <= thr
            cost = 0.0
            for side in (left, ~left):
                labels = y[side]
                w = len(labels)
                gini = 1.0 - sum(
                    (np.sum(labels == c) / w) ** 2 for c in classes)
                cost += w * gini
            if best is None or cost < best[0] - 1e-12:
                best = (cost, f, thr)
    return best


class TestDecisionTree:
    def test_root_split_example(self):
        X = np.array([[0.0], [1.0], [10.0], [11.0]])
        y = np.array(["A", "A", "B", "B"])
        model = learners.fit("dt", None, X, y, seed=0)
        tree = model.impl.tree
        assert tree.feature[0] == 0
        assert tree.threshold[0] == 5.5
        assert learners.predict(model, [[5.0]])[0] == "A"
        assert learners.predict(model, [[6.0]])[0] == "B"

    def test_split_matches_exhaustive_search(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            X = rng.uniform(0, 10, size=(20, 4))
            y = rng.integers(0, 3, size=20)
            if len(np.unique(y)) < 2:
                continue
            tree = build_tree(X, y, n_classes=3)
            oracle_cost, feat, thr = brute_force_best_split(X, y)
            got_left = X[:, tree.feature[0]] <= tree.threshold[0]
            got_cost = 0.0
            for side in (got_left, ~got_left):
                labels = y[side]
                gini = 1.0 - sum(
                    (np.sum(labels == c) / len(labels)) ** 2 for c in np.unique(y))
                got_cost += len(labels) * gini
            assert got_cost == pytest.approx(oracle_cost, abs=1e-9)

    def test_training_accuracy_one_when_consistent(self):
        rng = np.random.default_rng(23)
        X = rng.normal(size=(60, 3)).round(1)  # force duplicate values
        y = (X[:, 0] + X[:, 1] > 0).astype(int)
        model = learners.fit("dt", {"min_samples_split": 2}, X, y, seed=0)
        assert np.array_equal(learners.predict(model, X), y)

    def test_entropy_criterion_supported(self):
        X = np.array([[0.0], [1.0], [10.0], [11.0]])
        y = np.array([0, 0, 1, 1])
        model = learners.fit("dt", {"criterion": "entropy"}, X, y, seed=0)
        assert model.impl.tree.threshold[0] == 5.5


class TestRandomForest:
    def test_single_unbootstrapped_forest_equals_tree(self):
        rng = np.random.default_rng(29)
        for trial in range(10):
            X = rng.uniform(size=(int(rng.integers(10, 120)), 5))
            y = rng.integers(0, 3, size=len(X))
            if len(np.unique(y)) < 2:
                continue
            queries = rng.uniform(size=(50, 5))
            dt = learners.fit("dt", None, X, y, seed=trial)
            rf = learners.fit("rf", {"n_trees": 1, "bootstrap": False,
                                     "max_features": "all"}, X, y, seed=trial)
            assert np.array_equal(learners.predict(dt, queries),
                                  learners.predict(rf, queries))

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(31)
        X = rng.normal(size=(80, 6))
        y = rng.integers(0, 2, size=80)
        q = rng.normal(size=(40, 6))
        a = learners.fit("rf", {"n_trees": 12}, X, y, seed=9)
        b = learners.fit("rf", {"n_trees": 12}, X, y, seed=9)
        assert np.array_equal(learners.predict(a, q), learners.predict(b, q))

    def test_label_permutation_equivariance(self):
        # separable blobs: every leaf is pure, so no argmax tie can leak
        # the class-index ordering into the predictions
        rng = np.random.default_rng(37)
        centers = {"left": -8.0, "mid": 0.0, "right": 8.0}
        X = np.concatenate([rng.normal(c, 0.5, size=(20, 2))
                            for c in centers.values()])
        y = np.repeat(list(centers), 20)
        q = np.concatenate([rng.normal(c, 0.5, size=(10, 2))
                            for c in centers.values()])
        swap = {"left": "zleft", "mid": "amid", "right": "right"}
        a = learners.predict(learners.fit("rf", {"n_trees": 5}, X, y, 3), q)
        b = learners.predict(
            learners.fit("rf", {"n_trees": 5}, X, np.array([swap[v] for v in y]), 3), q)
        assert [swap[str(v)] for v in a] == [str(v) for v in b]


class TestGaussianNB:
    def test_hand_computed_posterior_1d(self):
        X = np.array([[0.0], [2.0], [10.0], [12.0]])
        y = np.array(["A", "A", "B", "B"])
        model = learners.fit("gnb", None, X, y, seed=0)
        assert learners.predict(model, [[1.0]])[0] == "A"

        # hand formula: P(x|c) = exp(-(x-mu)^2 / (2 var)) / sqrt(2 pi var)
        eps = 1e-9 * X.var(axis=0).max()
        var = 1.0 + eps
        x = 1.0
        like = {}
        for mu in (1.0, 11.0):
            like[mu] = np.exp(-((x - mu) ** 2) / (2 * var)) / np.sqrt(2 * np.pi * var)
        expected_a = like[1.0] * 0.5 / (like[1.0] * 0.5 + like[11.0] * 0.5)
        got = model.impl.class_probabilities(np.array([[x]]))[0]
        assert got[0] == pytest.approx(expected_a, abs=1e-12)

    def test_posterior_rows_sum_to_one(self):
        rng = np.random.default_rng(41)
        X = rng.normal(size=(90, 5))
        y = rng.integers(0, 3, size=90)
        model = learners.fit("gnb", None, X, y, seed=0)
        probs = model.impl.class_probabilities(rng.normal(size=(40, 5)))
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)


class TestKNN:
    def test_nearest_point(self):
        model = learners.fit("knn", {"n_neighbors": 1},
                             [[0.0], [10.0]], ["A", "B"], seed=0)
        assert learners.predict(model, [[1.0]])[0] == "A"

    def test_vote_tie_breaks_to_lowest_class_index(self):
        # one neighbor from each class at equal distance
        model = learners.fit("knn", {"n_neighbors": 2},
                             [[-1.0], [1.0]], ["B", "A"], seed=0)
        assert learners.predict(model, [[0.0]])[0] == "A"


class TestLinearSGD:
    def test_separable_and_boundary_probability(self):
        rng = np.random.default_rng(43)
        X = np.concatenate([rng.normal(-4, 0.5, size=(40, 1)),
                            rng.normal(4, 0.5, size=(40, 1))])
        y = np.array([0] * 40 + [1] * 40)
        model = learners.fit("lr-sgd", None, X, y, seed=1)
        assert (learners.predict(model, X) == y).mean() == 1.0

        # x where the class-1 decision value is 0 scores exactly 0.5
        impl = model.impl
        w = impl.W[1, 0] / impl.scaler.scale[0]
        b = impl.B[1] - impl.W[1, 0] * impl.scaler.mean[0] / impl.scaler.scale[0]
        x0 = -b / w
        score = impl.class_scores(np.array([[x0]]))[0, 1]
        assert score == pytest.approx(0.5, abs=1e-9)

    def test_hinge_variant_learns(self):
        rng = np.random.default_rng(47)
        X = np.concatenate([rng.normal(-3, 0.7, size=(50, 2)),
                            rng.normal(3, 0.7, size=(50, 2))])
        y = np.array(["neg"] * 50 + ["pos"] * 50)
        model = learners.fit("sv-sgd", None, X, y, seed=2)
        assert (learners.predict(model, X) == y).mean() >= 0.99

    def test_deterministic(self):
        rng = np.random.default_rng(53)
        X = rng.normal(size=(60, 3))
        y = rng.integers(0, 3, size=60)
        a = learners.fit("lr-sgd", None, X, y, seed=5)
        b = learners.fit("lr-sgd", None, X, y, seed=5)
        assert np.array_equal(a.impl.W, b.impl.W)


class TestAdaBoost:
    def test_separable_two_points_single_stump(self):
        model = learners.fit("ab", None, [[0.0], [10.0]], ["A", "B"], seed=0)
        assert len(model.impl.stumps) == 1
        pred = learners.predict(model, [[0.0], [10.0]])
        assert pred.tolist() == ["A", "B"]

    def test_boosting_carves_an_interval(self):
        # a single stump cannot isolate the middle band; boosting can
        rng = np.random.default_rng(59)
        X = rng.uniform(0, 3, size=(300, 1))
        y = ((X[:, 0] > 1.0) & (X[:, 0] <= 2.0)).astype(int)
        stump = learners.fit("ab", {"n_estimators": 1}, X, y, seed=1)
        boosted = learners.fit("ab", {"n_estimators": 40}, X, y, seed=1)
        stump_acc = (learners.predict(stump, X) == y).mean()
        boosted_acc = (learners.predict(boosted, X) == y).mean()
        assert boosted_acc > stump_acc
        assert boosted_acc > 0.9


class TestContracts:
    def test_single_class_raises(self):
        with pytest.raises(DegenerateTrainingError):
            learners.fit("dt", None, [[1.0], [2.0]], ["A", "A"], seed=0)

    def test_nan_rejected(self):
        with pytest.raises(InvalidModelInputError):
            learners.fit("dt", None, [[np.nan], [2.0]], ["A", "B"], seed=0)

    def test_width_mismatch_rejected(self):
        model = learners.fit("dt", None, [[0.0], [10.0]], ["A", "B"], seed=0)
        with pytest.raises(InvalidModelInputError):
            learners.predict(model, [[1.0, 2.0]])

    def test_unknown_algorithm_and_param(self):
        with pytest.raises(ValueError, match="unknown algorithm"):
            learners.fit("svm", None, [[0.0], [1.0]], ["A", "B"], seed=0)
        with pytest.raises(ValueError, match="unknown parameter"):
            learners.fit("dt", {"depth": 3}, [[0.0], [1.0]], ["A", "B"], seed=0)

    def test_grids_match_documented_ranges(self):
        assert len(learners.default_grid("dt")) == 14
        assert len(learners.default_grid("rf")) == 14
        assert [g["n_neighbors"] for g in learners.default_grid("knn")] == [1, 5, 10, 50]
        alphas = [g["alpha"] for g in learners.default_grid("lr-sgd")]
        assert alphas[0] == pytest.approx(1e-8) and alphas[-1] == pytest.approx(10.0)
        rates = [g["learning_rate"] for g in learners.default_grid("ab")]
        assert rates == pytest.approx([1e-3, 1e-2, 1e-1, 1.0, 10.0])


class TestMDI:
    def test_single_stump_importance(self):
        X = np.array([[0.0, 5.0], [1.0, 5.0], [10.0, 5.0], [11.0, 5.0]])
        y = np.array([0, 0, 1, 1])
        model = learners.fit("dt", None, X, y, seed=0)
        assert learners.mdi_importance(model).tolist() == [1.0, 0.0]

    def test_importances_sum_to_one(self):
        rng = np.random.default_rng(61)
        X = rng.normal(size=(100, 8))
        y = rng.integers(0, 2, size=100)
        model = learners.fit("rf", {"n_trees": 15}, X, y, seed=0)
        assert learners.mdi_importance(model).sum() == pytest.approx(1.0, abs=1e-9)

    def test_constant_feature_gets_zero(self):
        rng = np.random.default_rng(67)
        X = rng.normal(size=(100, 3))
        X[:, 1] = 7.0
        y = (X[:, 0] > 0).astype(int)
        model = learners.fit("rf", {"n_trees": 10}, X, y, seed=0)
        assert learners.mdi_importance(model)[1] == 0.0

    def test_non_tree_model_rejected(self):
        model = learners.fit("gnb", None, [[0.0], [10.0]], ["A", "B"], seed=0)
        with pytest.raises(UnsupportedModelError):
            learners.mdi_importance(model)


class TestSerialization:
    @pytest.mark.parametrize("alg", learners.ALGORITHM_IDS)
    def test_save_load_preserves_predictions(self, alg, tmp_path):
        rng = np.random.default_rng(71)
        X = rng.normal(size=(50, 4))
        y = rng.choice(["x", "y", "z"], size=50)
        params = {"n_trees": 5} if alg == "rf" else None
        model = learners.fit(alg, params, X, y, seed=4)
        path = tmp_path / f"{alg}.json"
        learners.save_model(model, path)
        back = learners.load_model(path)
        q = rng.normal(size=(30, 4))
        assert np.array_equal(learners.predict(model, q),
                              learners.predict(back, q))

    def test_version_checked(self, tmp_path):
        path = tmp_path / "m.json"
        model = learners.fit("dt", None, [[0.0], [1.0]], ["A", "B"], seed=0)
        learners.save_model(model, path)
        doc = path.read_text().replace('"format_version": 1', '"format_version": 99')
        path.write_text(doc)
        with pytest.raises(InvalidModelInputError):
            learners.load_model(path)
