"""L2-regularized logistic regression trained by full-batch gradient descent."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ._validation import check_matrix, check_X_y
from .balance import ClassWeights
from .exceptions import TrainingError


def _softplus(z: np.ndarray) -> np.ndarray:
    # log(1 + e^z) without overflow
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def resolve_sample_weight(y: np.ndarray, class_weight) -> np.ndarray:
    """Per-instance weights from a ClassWeights, a {label: w} dict, or None."""
    if class_weight is None:
        return np.ones(y.size, dtype=np.float64)
    if isinstance(class_weight, ClassWeights):
        return class_weight.per_instance(y)
    return np.asarray([class_weight[int(label)] for label in y], dtype=np.float64)


def logistic_loss_and_gradient(coef: np.ndarray, intercept: float, X, y,
                               sample_weight: np.ndarray, l2: float
                               ) -> tuple[float, np.ndarray, float]:
    """Weighted cross-entropy averaged by total weight, plus l2/2 * |coef|^2.

    The intercept is not regularized. Normalizing by the total weight makes
    instance duplication and integer class weights exactly equivalent.
    """
    z = X @ coef + intercept
    w_total = float(sample_weight.sum())
    ce = _softplus(z) - y * z
    loss = float(sample_weight @ ce) / w_total + 0.5 * l2 * float(coef @ coef)
    residual = sample_weight * (sigmoid(z) - y) / w_total
    grad_coef = np.asarray(X.T @ residual).ravel() + l2 * coef
    grad_intercept = float(residual.sum())
    return loss, grad_coef, grad_intercept


class LogisticRegressionGD(BaseEstimator, ClassifierMixin):
    """Binary logistic regression fitted by full-batch gradient descent.

    Descent stops when the gradient's infinity norm drops below ``tol`` or
    the epoch budget runs out. ``class_weight`` scales each instance's loss
    contribution by its class weight.
    """

    def __init__(self, learning_rate: float = 0.1, l2: float = 1e-4,
                 epochs: int = 300, tol: float = 1e-6, class_weight=None):
        self.learning_rate = learning_rate
        self.l2 = l2
        self.epochs = epochs
        self.tol = tol
        self.class_weight = class_weight

    def fit(self, X, y) -> "LogisticRegressionGD":
        X, y = check_X_y(X, y)
        if len(np.unique(y)) < 2:
            raise TrainingError("training data contains a single class")
        sample_weight = resolve_sample_weight(y, self.class_weight)
        coef = np.zeros(X.shape[1], dtype=np.float64)
        intercept = 0.0
        converged = False
        n_iter = 0
        for n_iter in range(1, self.epochs + 1):
            _, grad_coef, grad_intercept = logistic_loss_and_gradient(
                coef, intercept, X, y, sample_weight, self.l2)
            grad_inf = max(float(np.abs(grad_coef).max()), abs(grad_intercept))
            if grad_inf < self.tol:
                converged = True
                break
            coef -= self.learning_rate * grad_coef
            intercept -= self.learning_rate * grad_intercept
        self.coef_ = coef
        self.intercept_ = intercept
        self.converged_ = converged
        self.n_iter_ = n_iter
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X) -> np.ndarray:
        X = check_matrix(X)
        if X.shape[1] != self.coef_.shape[0]:
            raise ValueError(
                f"X has {X.shape[1]} features; model expects {self.coef_.shape[0]}")
        return np.asarray(X @ self.coef_).ravel() + self.intercept_

    def predict_proba(self, X) -> np.ndarray:
        p = sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    def training_loss(self, X, y) -> float:
        X, y = check_X_y(X, y)
        sample_weight = resolve_sample_weight(y, self.class_weight)
        loss, _, _ = logistic_loss_and_gradient(
            self.coef_, self.intercept_, X, y, sample_weight, self.l2)
        return loss
