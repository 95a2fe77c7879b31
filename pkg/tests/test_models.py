import numpy as np
import pytest
import scipy.sparse as sp

from satdbench.balance import ClassWeights
from satdbench.boosting import GradientBoosting
from satdbench.exceptions import ModelFormatError, TrainingError
from satdbench.forest import RandomForest
from satdbench.linear import LogisticRegressionGD, logistic_loss_and_gradient
from satdbench.models import (
    TrainedModel,
    load_model,
    make_model,
    save_model,
)
from satdbench.tree import _GiniCriterion, grow_tree, tree_apply


def blobs(rng, n=40, gap=4.0):
    X = np.vstack([rng.normal(-gap / 2, 0.5, (n // 2, 2)),
                   rng.normal(gap / 2, 0.5, (n // 2, 2))])
    y = np.array([0] * (n // 2) + [1] * (n // 2))
    return sp.csr_matrix(X), y


class TestLogisticRegression:
    def test_separable_data_perfect_training_accuracy(self):
        X, y = blobs(np.random.default_rng(0))
        model = LogisticRegressionGD().fit(X, y)
        assert (model.predict(X) == y).mean() == 1.0

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        X = sp.csr_matrix(rng.random((20, 10)) * (rng.random((20, 10)) < 0.5))
        y = rng.integers(0, 2, 20)
        w = rng.random(20) + 0.5
        coef = rng.normal(0, 0.5, 10)
        intercept = float(rng.normal())
        l2 = 1e-3
        _, grad_coef, grad_b = logistic_loss_and_gradient(
            coef, intercept, X, y, w, l2)
        eps = 1e-6

        def loss_at(c, b):
            return logistic_loss_and_gradient(c, b, X, y, w, l2)[0]

        for j in range(10):
            bump = np.zeros(10)
            bump[j] = eps
            fd = (loss_at(coef + bump, intercept)
                  - loss_at(coef - bump, intercept)) / (2 * eps)
            assert abs(fd - grad_coef[j]) <= 1e-5 * max(1.0, abs(fd))
        fd_b = (loss_at(coef, intercept + eps)
                - loss_at(coef, intercept - eps)) / (2 * eps)
        assert abs(fd_b - grad_b) <= 1e-5 * max(1.0, abs(fd_b))

    def test_duplication_equals_integer_weight(self):
        rng = np.random.default_rng(2)
        X, y = blobs(rng, n=30, gap=2.0)
        dup_rows = np.concatenate([np.arange(30), np.flatnonzero(y == 1)])
        X_dup, y_dup = X[dup_rows], y[dup_rows]
        weighted = LogisticRegressionGD(
            class_weight={0: 1.0, 1: 2.0}).fit(X, y)
        duplicated = LogisticRegressionGD().fit(X_dup, y_dup)
        assert np.allclose(weighted.coef_, duplicated.coef_, atol=1e-6)
        assert weighted.intercept_ == pytest.approx(duplicated.intercept_,
                                                    abs=1e-6)

    def test_weight_scaling_invariance(self):
        rng = np.random.default_rng(3)
        X, y = blobs(rng, n=30, gap=2.0)
        a = LogisticRegressionGD(class_weight={0: 1.0, 1: 5.0}).fit(X, y)
        b = LogisticRegressionGD(class_weight={0: 7.0, 1: 35.0}).fit(X, y)
        assert np.allclose(a.coef_, b.coef_, atol=1e-4)
        assert a.intercept_ == pytest.approx(b.intercept_, abs=1e-4)

    def test_zero_model_scores_half(self):
        model = LogisticRegressionGD()
        model.coef_ = np.zeros(3)
        model.intercept_ = 0.0
        scores = model.predict_proba(sp.csr_matrix(np.eye(3)))[:, 1]
        assert np.all(scores == 0.5)

    def test_single_class_rejected(self):
        X = sp.csr_matrix(np.eye(4))
        with pytest.raises(TrainingError):
            LogisticRegressionGD().fit(X, np.ones(4, dtype=int))

    def test_class_weights_object_accepted(self):
        X, y = blobs(np.random.default_rng(4), n=20)
        cw = ClassWeights(2.0, 0.5, minority_label=1)
        model = LogisticRegressionGD(class_weight=cw).fit(X, y)
        assert model.converged_ or model.n_iter_ == model.epochs

    def test_dimension_mismatch(self):
        X, y = blobs(np.random.default_rng(5), n=20)
        model = LogisticRegressionGD().fit(X, y)
        with pytest.raises(ValueError):
            model.predict(sp.csr_matrix(np.eye(5)))


def exhaustive_best_stump(X_dense, y, weights):
    """Oracle: enumerate every feature/midpoint, split x <= t left."""
    n, V = X_dense.shape
    parent = weighted_gini_cost(weights, y)
    best = (None, None, -np.inf)
    for j in range(V):
        values = np.unique(X_dense[:, j])
        for lo, hi in zip(values[:-1], values[1:]):
            t = 0.5 * (lo + hi)
            mask = X_dense[:, j] <= t
            if mask.sum() == 0 or mask.sum() == n:
                continue
            cost = (weighted_gini_cost(weights[mask], y[mask])
                    + weighted_gini_cost(weights[~mask], y[~mask]))
            gain = parent - cost
            if gain > best[2] + 1e-12:
                best = (j, t, gain)
    return best


def weighted_gini_cost(w, y):
    W = w.sum()
    if W == 0:
        return 0.0
    w1 = w[y == 1].sum()
    return W * (1 - (w1 / W) ** 2 - ((W - w1) / W) ** 2)


class TestTreeSplitSearch:
    @pytest.mark.parametrize("seed", range(8))
    def test_depth_one_matches_exhaustive_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        n, V = 30, 5
        dense = rng.random((n, V)) * (rng.random((n, V)) < 0.6)
        y = rng.integers(0, 2, n)
        if len(np.unique(y)) < 2:
            y[0] = 1 - y[0]
        w = np.ones(n)
        X = sp.csr_matrix(dense)
        tree = grow_tree(X, w, w * y, _GiniCriterion(), max_depth=1,
                         min_leaf=1)
        j, t, gain = exhaustive_best_stump(dense, y, w)
        if j is None:
            assert tree.n_nodes == 1
        else:
            assert tree.feature[0] == j
            assert tree.threshold[0] == pytest.approx(t, abs=1e-12)

    def test_weighted_split_matches_oracle(self):
        rng = np.random.default_rng(100)
        dense = rng.random((40, 4)) * (rng.random((40, 4)) < 0.7)
        y = rng.integers(0, 2, 40)
        w = np.where(y == 1, 3.0, 0.5)
        tree = grow_tree(sp.csr_matrix(dense), w, w * y, _GiniCriterion(),
                         max_depth=1, min_leaf=1)
        j, t, _ = exhaustive_best_stump(dense, y, w)
        assert tree.feature[0] == j
        assert tree.threshold[0] == pytest.approx(t, abs=1e-12)

    def test_apply_routes_like_dense_traversal(self):
        rng = np.random.default_rng(7)
        dense = rng.random((50, 6)) * (rng.random((50, 6)) < 0.5)
        y = rng.integers(0, 2, 50)
        w = np.ones(50)
        X = sp.csr_matrix(dense)
        tree = grow_tree(X, w, w * y, _GiniCriterion(), max_depth=4,
                         min_leaf=2)
        out = tree_apply(tree, X)
        for i in range(50):
            node = 0
            while tree.feature[node] != -1:
                if dense[i, tree.feature[node]] <= tree.threshold[node]:
                    node = tree.left[node]
                else:
                    node = tree.right[node]
            assert np.allclose(out[i], tree.value[node])


class TestRandomForest:
    def test_fixed_seed_reproducible(self):
        rng = np.random.default_rng(8)
        X, y = blobs(rng, n=60, gap=2.0)
        a = RandomForest(n_trees=10, random_state=1).fit(X, y)
        b = RandomForest(n_trees=10, random_state=1).fit(X, y)
        assert np.array_equal(a.predict_proba(X), b.predict_proba(X))

    def test_oob_beats_single_tree(self):
        rng = np.random.default_rng(9)
        dense = rng.random((400, 8))
        y = (dense[:, 0] + 0.5 * dense[:, 1]
             + rng.normal(0, 0.35, 400) > 0.75).astype(int)
        X = sp.csr_matrix(dense)
        many = RandomForest(n_trees=60, max_depth=6, random_state=3,
                            oob_score=True).fit(X, y)
        one = RandomForest(n_trees=1, max_depth=6, random_state=3,
                           oob_score=True).fit(X, y)
        assert many.oob_score_ >= one.oob_score_

    def test_tree_index_keyed_seeds(self):
        # tree t is identical whether trained alone or inside a larger forest
        rng = np.random.default_rng(10)
        X, y = blobs(rng, n=40)
        wide = RandomForest(n_trees=5, random_state=7).fit(X, y)
        narrow = RandomForest(n_trees=2, random_state=7).fit(X, y)
        for t in range(2):
            assert np.array_equal(wide.trees_[t].feature,
                                  narrow.trees_[t].feature)
            assert np.array_equal(wide.trees_[t].threshold,
                                  narrow.trees_[t].threshold)

    def test_scores_are_probabilities(self):
        rng = np.random.default_rng(11)
        X, y = blobs(rng, n=40)
        model = RandomForest(n_trees=5, random_state=0).fit(X, y)
        proba = model.predict_proba(X)
        assert np.all(proba >= 0) and np.all(proba <= 1)
        assert np.allclose(proba.sum(axis=1), 1.0)

    def test_single_class_rejected(self):
        with pytest.raises(TrainingError):
            RandomForest(n_trees=2).fit(sp.csr_matrix(np.eye(4)),
                                        np.zeros(4, dtype=int))


class TestGradientBoosting:
    def test_one_round_depth_one_leaf_values(self):
        # symmetric 4-point set: base score 0, g = (.5,.5,-.5,-.5), h = .25
        X = sp.csr_matrix(np.array([[0.0], [0.0], [1.0], [1.0]]))
        y = np.array([0, 0, 1, 1])
        model = GradientBoosting(n_rounds=1, max_depth=1, l2_leaf=1.0).fit(X, y)
        assert model.base_score_ == 0.0
        tree = model.trees_[0]
        assert tree.feature[0] == 0
        left = tree.value[tree.left[0]][0]
        right = tree.value[tree.right[0]][0]
        # leaf = -sum(g) / (sum(h) + l2) = -(1.0) / (0.5 + 1.0)
        assert left == pytest.approx(-1.0 / 1.5, abs=1e-12)
        assert right == pytest.approx(1.0 / 1.5, abs=1e-12)

    def test_training_loss_non_increasing(self):
        rng = np.random.default_rng(12)
        X = sp.csr_matrix(rng.random((60, 5)) * (rng.random((60, 5)) < 0.6))
        y = rng.integers(0, 2, 60)
        if len(np.unique(y)) < 2:
            y[0] = 1 - y[0]
        model = GradientBoosting(n_rounds=30, max_depth=3).fit(X, y)
        curve = model.training_log_loss_curve(X, y)
        assert np.all(np.diff(curve) <= 1e-12)

    def test_deterministic(self):
        rng = np.random.default_rng(13)
        X, y = blobs(rng, n=40)
        a = GradientBoosting(n_rounds=5, random_state=0).fit(X, y)
        b = GradientBoosting(n_rounds=5, random_state=0).fit(X, y)
        assert np.array_equal(a.predict_proba(X), b.predict_proba(X))

    def test_early_stopping_truncates(self):
        rng = np.random.default_rng(14)
        X, y = blobs(rng, n=80, gap=6.0)
        X_val, y_val = blobs(np.random.default_rng(15), n=40, gap=6.0)
        # noisy validation labels make the val loss bottom out early
        y_val = y_val.copy()
        flip = rng.random(40) < 0.25
        y_val[flip] = 1 - y_val[flip]
        model = GradientBoosting(n_rounds=200, max_depth=2,
                                 early_stopping_rounds=5)
        model.fit(X, y, eval_set=(X_val, y_val))
        assert model.n_rounds_used_ < 200
        # the kept prefix ends at the best validation round
        assert len(model.trees_) == model.n_rounds_used_

    def test_scores_in_unit_interval(self):
        rng = np.random.default_rng(16)
        X, y = blobs(rng, n=40)
        model = GradientBoosting(n_rounds=10).fit(X, y)
        s = model.predict_proba(X)[:, 1]
        assert np.all((s >= 0) & (s <= 1))


class TestSerialization:
    @pytest.mark.parametrize("kind", ["logistic", "forest", "boosting"])
    def test_roundtrip_predictions_exact(self, kind, tmp_path):
        rng = np.random.default_rng(17)
        X, y = blobs(rng, n=40)
        hyper = {"n_trees": 4} if kind == "forest" else \
                {"n_rounds": 4} if kind == "boosting" else {}
        est = make_model(kind, random_state=0, hyper=hyper).fit(X, y)
        model = TrainedModel(kind, est, vocab_sha="abc", technique="baseline")
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.kind == kind
        assert loaded.vocab_sha == "abc"
        assert loaded.technique == "baseline"
        got = loaded.predict_scores(X)
        want = model.predict_scores(X)
        assert np.allclose(got, want, atol=1e-12, rtol=0)

    def test_truncated_file_rejected(self, tmp_path):
        rng = np.random.default_rng(18)
        X, y = blobs(rng, n=20)
        est = make_model("logistic").fit(X, y)
        path = tmp_path / "model.json"
        save_model(TrainedModel("logistic", est), path)
        content = path.read_text()
        path.write_text(content[: len(content) // 2])
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_version_mismatch_rejected(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text('{"schema": "satdbench-model/99", "kind": "logistic"}')
        with pytest.raises(ModelFormatError, match="schema"):
            load_model(path)

    def test_unknown_kind_rejected(self):
        with pytest.raises(TrainingError):
            make_model("perceptron")
