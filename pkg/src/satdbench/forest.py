"""Bagged Gini decision trees with per-split random feature subsets."""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ._validation import check_matrix, check_X_y, derive_seed
from .exceptions import TrainingError
from .linear import resolve_sample_weight
from .tree import Tree, _GiniCriterion, grow_tree, tree_apply


class RandomForest(BaseEstimator, ClassifierMixin):
    """Random forest over sparse rows.

    Every tree trains on a same-size bootstrap resample; splits greedily
    maximize the weighted Gini decrease over ``ceil(sqrt(V))`` randomly
    drawn features per node. Class weights enter both the split criterion
    and the leaf probabilities as instance weights. Each tree's randomness
    is keyed by (random_state, tree index), so results do not depend on
    training order and trees may be built in parallel.
    """

    def __init__(self, n_trees: int = 100, max_depth: int = 16,
                 min_leaf: int = 2, class_weight=None,
                 random_state: int | None = None, oob_score: bool = False):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.class_weight = class_weight
        self.random_state = random_state
        self.oob_score = oob_score

    def _bootstrap_rng(self, tree_index: int) -> np.random.Generator:
        return np.random.default_rng(derive_seed(self.random_state, tree_index))

    def fit(self, X, y) -> "RandomForest":
        X, y = check_X_y(X, y)
        if len(np.unique(y)) < 2:
            raise TrainingError("training data contains a single class")
        n, V = X.shape
        weight = resolve_sample_weight(y, self.class_weight)
        mtry = min(V, math.ceil(math.sqrt(V)))
        criterion = _GiniCriterion()

        self.trees_: list[Tree] = []
        for t in range(self.n_trees):
            rng = self._bootstrap_rng(t)
            boot = rng.integers(0, n, n)
            Xb = X[boot]
            wb = weight[boot]
            tree = grow_tree(Xb, wb, wb * y[boot], criterion,
                             max_depth=self.max_depth, min_leaf=self.min_leaf,
                             n_candidate_features=mtry, rng=rng)
            self.trees_.append(tree)
        self.n_features_in_ = V
        self.classes_ = np.array([0, 1])
        if self.oob_score:
            self._compute_oob(X, y)
        return self

    def _compute_oob(self, X, y) -> None:
        n = X.shape[0]
        score_sum = np.zeros(n)
        votes = np.zeros(n)
        for t, tree in enumerate(self.trees_):
            rng = self._bootstrap_rng(t)
            boot = rng.integers(0, n, n)
            out = np.ones(n, dtype=bool)
            out[boot] = False
            if not out.any():
                continue
            score_sum[out] += tree_apply(tree, X[np.flatnonzero(out)])[:, 1]
            votes[out] += 1
        covered = votes > 0
        self.oob_decision_ = np.full(n, np.nan)
        self.oob_decision_[covered] = score_sum[covered] / votes[covered]
        predictions = self.oob_decision_[covered] >= 0.5
        self.oob_score_ = float((predictions == (y[covered] == 1)).mean())

    def predict_proba(self, X) -> np.ndarray:
        X = check_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features; model expects {self.n_features_in_}")
        Xc = X.tocsc()
        p1 = np.zeros(X.shape[0])
        for tree in self.trees_:
            p1 += tree_apply(tree, Xc)[:, 1]
        p1 /= len(self.trees_)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)
