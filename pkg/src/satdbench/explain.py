"""Additive feature attributions for the logistic model.

For a linear margin ``w.x + b`` with independent features, the game-theoretic
attribution of feature j has the closed form ``w_j * (x_j - reference_j)``
against a reference point; the reference's margin is the base value, and
base + attributions always reconstructs the instance margin exactly.
Attributions are computed on the margin (log-odds) scale so that identity is
exact rather than approximate.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from ._validation import check_matrix
from .features import Vocabulary
from .linear import LogisticRegressionGD


@dataclass(frozen=True)
class ShapReport:
    instance_id: str
    base_value: float
    attributions: np.ndarray  # dense, one entry per vocabulary column

    @property
    def margin(self) -> float:
        return self.base_value + float(self.attributions.sum())


def background_means(X) -> np.ndarray:
    """Column means of a reference matrix (typically the training fold)."""
    X = check_matrix(X)
    return np.asarray(X.mean(axis=0)).ravel()


def linear_shap(model: LogisticRegressionGD, vector,
                reference: np.ndarray, instance_id: str = "") -> ShapReport:
    """Attribution of one instance against a reference point."""
    reports = linear_shap_batch(model, vector, reference, [instance_id])
    return reports[0]


def linear_shap_batch(model: LogisticRegressionGD, X, reference: np.ndarray,
                      instance_ids: list[str] | None = None) -> list[ShapReport]:
    X = check_matrix(X)
    coef = model.coef_
    reference = np.asarray(reference, dtype=np.float64).ravel()
    if X.shape[1] != coef.size or reference.size != coef.size:
        raise ValueError(
            f"dimension mismatch: X has {X.shape[1]} columns, model has "
            f"{coef.size}, reference has {reference.size}")
    base = float(coef @ reference) + model.intercept_
    if instance_ids is None:
        instance_ids = [str(i) for i in range(X.shape[0])]
    reports = []
    for i in range(X.shape[0]):
        x = np.asarray(X[i].todense()).ravel()
        reports.append(ShapReport(instance_ids[i], base, coef * (x - reference)))
    return reports


@dataclass(frozen=True)
class FeatureContributionStats:
    """Which vocabulary columns carry attribution mass over a report set."""

    mean_abs: np.ndarray
    contributing: tuple[int, ...]
    non_contributing: tuple[int, ...]
    terms: tuple[str, ...]

    def ranked_terms(self) -> list[str]:
        """Contributing terms, highest mean |attribution| first."""
        order = sorted(self.contributing,
                       key=lambda j: (-self.mean_abs[j], j))
        return [self.terms[j] for j in order]

    def top(self, k: int) -> list[str]:
        return self.ranked_terms()[:k]


def contribution_stats(reports: list[ShapReport], vocab: Vocabulary,
                       tol: float = 0.0) -> FeatureContributionStats:
    """Split the vocabulary into contributing and non-contributing features.

    A feature contributes when the mean of its absolute attribution over the
    reports exceeds ``tol`` (default: any nonzero mass).
    """
    if not reports:
        raise ValueError("contribution stats need at least one report")
    acc = np.zeros(len(vocab))
    for report in reports:
        if report.attributions.size != len(vocab):
            raise ValueError("report dimension does not match the vocabulary")
        acc += np.abs(report.attributions)
    mean_abs = acc / len(reports)
    contributing = tuple(int(j) for j in np.flatnonzero(mean_abs > tol))
    non_contributing = tuple(int(j) for j in np.flatnonzero(~(mean_abs > tol)))
    return FeatureContributionStats(mean_abs, contributing, non_contributing,
                                    tuple(vocab.terms))


def feature_diff(stats_technique: FeatureContributionStats,
                 stats_baseline: FeatureContributionStats
                 ) -> tuple[list[str], float]:
    """Terms contributing under a technique but not under the baseline.

    Returns the new terms ranked by the technique's mean |attribution| and
    their share of the technique's contributing set.
    """
    if stats_technique.terms != stats_baseline.terms:
        raise ValueError("contribution stats come from different vocabularies")
    new = set(stats_technique.contributing) - set(stats_baseline.contributing)
    order = sorted(new, key=lambda j: (-stats_technique.mean_abs[j], j))
    terms = [stats_technique.terms[j] for j in order]
    denom = len(stats_technique.contributing)
    fraction = len(new) / denom if denom else 0.0
    return terms, fraction


def write_contributions_csv(stats: FeatureContributionStats, path,
                            header_lines: tuple[str, ...] = ()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("term,mean_abs_attribution,contributing\n")
        contributing = set(stats.contributing)
        for j, term in enumerate(stats.terms):
            flag = "true" if j in contributing else "false"
            fh.write(f"{term},{stats.mean_abs[j]!r},{flag}\n")


def write_diff_csv(new_terms: list[str], technique: str, path,
                   header_lines: tuple[str, ...] = ()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("term,technique,rank\n")
        for rank, term in enumerate(new_terms, start=1):
            fh.write(f"{term},{technique},{rank}\n")
