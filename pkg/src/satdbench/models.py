"""Uniform training/scoring surface over the three classifier kinds, plus
versioned model (de)serialization.

The on-disk format is a single JSON document: schema id, model kind,
hyperparameters, parameters, and the SHA-256 of the vocabulary it was fitted
against. JSON float round-tripping is exact, so a load/save cycle preserves
predictions bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .boosting import GradientBoosting
from .exceptions import ModelFormatError, TrainingError
from .forest import RandomForest
from .linear import LogisticRegressionGD
from .tree import Tree

MODEL_SCHEMA = "satdbench-model/1"
MODEL_KINDS = ("logistic", "forest", "boosting")

DEFAULT_HYPER = {
    "logistic": {"learning_rate": 0.1, "l2": 1e-4, "epochs": 300, "tol": 1e-6},
    "forest": {"n_trees": 100, "max_depth": 16, "min_leaf": 2},
    "boosting": {"n_rounds": 100, "max_depth": 6, "learning_rate": 0.1,
                 "l2_leaf": 1.0},
}


def make_model(kind: str, class_weight=None, random_state: int | None = None,
               hyper: dict | None = None):
    """Instantiate an unfitted classifier of the given kind."""
    if kind not in MODEL_KINDS:
        raise TrainingError(f"unknown model kind {kind!r}; "
                            f"expected one of {MODEL_KINDS}")
    params = dict(DEFAULT_HYPER[kind])
    params.update(hyper or {})
    if kind == "logistic":
        return LogisticRegressionGD(class_weight=class_weight, **params)
    if kind == "forest":
        return RandomForest(class_weight=class_weight,
                            random_state=random_state, **params)
    return GradientBoosting(class_weight=class_weight,
                            random_state=random_state, **params)


@dataclass
class TrainedModel:
    """A fitted classifier plus the metadata needed to apply it."""

    kind: str
    estimator: object
    vocab_sha: str = ""
    technique: str = ""

    def predict_scores(self, X) -> np.ndarray:
        """Positive-class score in [0, 1] for each row."""
        return self.estimator.predict_proba(X)[:, 1]

    def predict_labels(self, X) -> np.ndarray:
        return (self.predict_scores(X) >= 0.5).astype(np.int64)


def _tree_to_dict(tree: Tree) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "value": tree.value.tolist(),
    }


def _tree_from_dict(d: dict) -> Tree:
    return Tree(
        feature=np.asarray(d["feature"], dtype=np.int64),
        threshold=np.asarray(d["threshold"], dtype=np.float64),
        left=np.asarray(d["left"], dtype=np.int64),
        right=np.asarray(d["right"], dtype=np.int64),
        value=np.asarray(d["value"], dtype=np.float64),
    )


def save_model(model: TrainedModel, path, meta: dict | None = None) -> None:
    est = model.estimator
    if model.kind == "logistic":
        params = {"coef": est.coef_.tolist(), "intercept": est.intercept_}
        hyper = {"learning_rate": est.learning_rate, "l2": est.l2,
                 "epochs": est.epochs, "tol": est.tol}
    elif model.kind == "forest":
        params = {"trees": [_tree_to_dict(t) for t in est.trees_],
                  "n_features": est.n_features_in_}
        hyper = {"n_trees": est.n_trees, "max_depth": est.max_depth,
                 "min_leaf": est.min_leaf}
    elif model.kind == "boosting":
        params = {"trees": [_tree_to_dict(t) for t in est.trees_],
                  "base_score": est.base_score_,
                  "n_features": est.n_features_in_}
        hyper = {"n_rounds": est.n_rounds, "max_depth": est.max_depth,
                 "learning_rate": est.learning_rate, "l2_leaf": est.l2_leaf}
    else:
        raise ModelFormatError(f"cannot serialize model kind {model.kind!r}")
    document = {
        "schema": MODEL_SCHEMA,
        "kind": model.kind,
        "technique": model.technique,
        "vocab_sha256": model.vocab_sha,
        "meta": meta or {},
        "hyper": hyper,
        "params": params,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(document, fh)
        fh.write("\n")


def load_model(path) -> TrainedModel:
    try:
        with open(path, encoding="utf-8") as fh:
            document = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"unreadable model file {path}: {exc}") from exc
    schema = document.get("schema")
    if schema != MODEL_SCHEMA:
        raise ModelFormatError(
            f"model file {path} has schema {schema!r}; this build reads "
            f"{MODEL_SCHEMA!r}")
    kind = document["kind"]
    hyper = document["hyper"]
    params = document["params"]
    if kind == "logistic":
        est = LogisticRegressionGD(**hyper)
        est.coef_ = np.asarray(params["coef"], dtype=np.float64)
        est.intercept_ = float(params["intercept"])
        est.n_features_in_ = est.coef_.size
        est.classes_ = np.array([0, 1])
    elif kind == "forest":
        est = RandomForest(**hyper)
        est.trees_ = [_tree_from_dict(t) for t in params["trees"]]
        est.n_features_in_ = int(params["n_features"])
        est.classes_ = np.array([0, 1])
    elif kind == "boosting":
        est = GradientBoosting(**hyper)
        est.trees_ = [_tree_from_dict(t) for t in params["trees"]]
        est.base_score_ = float(params["base_score"])
        est.n_features_in_ = int(params["n_features"])
        est.classes_ = np.array([0, 1])
    else:
        raise ModelFormatError(f"model file {path} has unknown kind {kind!r}")
    return TrainedModel(kind=kind, estimator=est,
                        vocab_sha=document.get("vocab_sha256", ""),
                        technique=document.get("technique", ""))
