"""Gradient-boosted regression trees on the logistic loss.

Each round fits one tree to the loss gradients with second-order leaf values
``-sum(g) / (sum(h) + l2_leaf)``; splits are exact greedy over presorted
feature values. Class weights scale each instance's gradient and hessian.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ._validation import check_matrix, check_X_y
from .exceptions import TrainingError
from .linear import resolve_sample_weight, sigmoid, _softplus
from .tree import Tree, _GainCriterion, grow_tree, tree_apply


class GradientBoosting(BaseEstimator, ClassifierMixin):
    """Boosted trees for binary classification.

    The model margin is ``base_score + learning_rate * sum(tree outputs)``;
    the base score is the weighted log-odds of the training labels. With an
    ``eval_set``, training stops once the validation log-loss has not
    improved for ``early_stopping_rounds`` rounds and keeps the best prefix
    of trees.
    """

    def __init__(self, n_rounds: int = 100, max_depth: int = 6,
                 learning_rate: float = 0.1, l2_leaf: float = 1.0,
                 class_weight=None, random_state: int | None = None,
                 early_stopping_rounds: int | None = None):
        self.n_rounds = n_rounds
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.l2_leaf = l2_leaf
        self.class_weight = class_weight
        self.random_state = random_state
        self.early_stopping_rounds = early_stopping_rounds

    def fit(self, X, y, eval_set: tuple | None = None) -> "GradientBoosting":
        X, y = check_X_y(X, y)
        if len(np.unique(y)) < 2:
            raise TrainingError("training data contains a single class")
        weight = resolve_sample_weight(y, self.class_weight)
        yf = y.astype(np.float64)

        pos = float(weight[y == 1].sum())
        neg = float(weight[y == 0].sum())
        self.base_score_ = float(np.log(pos / neg))
        margin = np.full(X.shape[0], self.base_score_)
        Xc = X.tocsc()

        if eval_set is not None:
            X_val, y_val = check_X_y(*eval_set)
            X_val = X_val.tocsc()
            val_margin = np.full(X_val.shape[0], self.base_score_)
            best_loss = np.inf
            best_round = 0
        criterion = _GainCriterion(self.l2_leaf)

        self.trees_: list[Tree] = []
        for round_no in range(1, self.n_rounds + 1):
            p = sigmoid(margin)
            g = weight * (p - yf)
            h = weight * p * (1.0 - p)
            tree = grow_tree(X, g, h, criterion, max_depth=self.max_depth,
                             min_leaf=1)
            self.trees_.append(tree)
            margin += self.learning_rate * tree_apply(tree, Xc)[:, 0]
            if eval_set is not None:
                val_margin += self.learning_rate * tree_apply(tree, X_val)[:, 0]
                val_loss = float(np.mean(_softplus(val_margin) - y_val * val_margin))
                if val_loss < best_loss - 1e-12:
                    best_loss = val_loss
                    best_round = round_no
                elif (self.early_stopping_rounds is not None
                      and round_no - best_round >= self.early_stopping_rounds):
                    break
        if eval_set is not None and self.early_stopping_rounds is not None:
            self.trees_ = self.trees_[:best_round]
        self.n_rounds_used_ = len(self.trees_)
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X) -> np.ndarray:
        X = check_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features; model expects {self.n_features_in_}")
        Xc = X.tocsc()
        margin = np.full(X.shape[0], self.base_score_)
        for tree in self.trees_:
            margin += self.learning_rate * tree_apply(tree, Xc)[:, 0]
        return margin

    def predict_proba(self, X) -> np.ndarray:
        p = sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    def training_log_loss_curve(self, X, y) -> np.ndarray:
        """Unweighted training log-loss after each round; handy for checks."""
        X, y = check_X_y(X, y)
        yf = y.astype(np.float64)
        Xc = X.tocsc()
        margin = np.full(X.shape[0], self.base_score_)
        losses = []
        for tree in self.trees_:
            margin += self.learning_rate * tree_apply(tree, Xc)[:, 0]
            losses.append(float(np.mean(_softplus(margin) - yf * margin)))
        return np.asarray(losses)
