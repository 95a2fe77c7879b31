"""Evaluation metrics and the paired signed-rank significance test.

Precision, recall, and F1 come from confusion counts at a score threshold;
ranking quality is the probability that a random positive outscores a random
negative (ties count half). Metrics whose denominator is zero are reported
as ``None`` rather than zero so aggregation can exclude them explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricsReport:
    precision: float | None
    recall: float | None
    f1: float | None
    roc_auc: float | None
    confusion: ConfusionCounts
    project_id: str = ""
    technique: str = ""
    model_kind: str = ""
    fold_id: str = ""

    def as_dict(self) -> dict:
        return {
            "project": self.project_id,
            "technique": self.technique,
            "model": self.model_kind,
            "fold": self.fold_id,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "roc_auc": self.roc_auc,
            "tp": self.confusion.tp,
            "tn": self.confusion.tn,
            "fp": self.confusion.fp,
            "fn": self.confusion.fn,
        }


def confusion_counts(labels, predictions) -> ConfusionCounts:
    y = np.asarray(labels, dtype=np.int64)
    p = np.asarray(predictions, dtype=np.int64)
    return ConfusionCounts(
        tp=int(((y == 1) & (p == 1)).sum()),
        tn=int(((y == 0) & (p == 0)).sum()),
        fp=int(((y == 0) & (p == 1)).sum()),
        fn=int(((y == 1) & (p == 0)).sum()),
    )


def roc_auc(labels, scores) -> float | None:
    """Rank-based AUC with average ranks for tied scores.

    Equals (concordant pairs + half the tied pairs) / (positives x
    negatives); returns None when either class is absent.
    """
    y = np.asarray(labels, dtype=np.int64)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int((y == 1).sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _average_ranks(s)
    rank_sum = float(ranks[y == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def compute_metrics(labels, scores, threshold: float = 0.5,
                    project_id: str = "", technique: str = "",
                    model_kind: str = "", fold_id: str = "") -> MetricsReport:
    """Score one evaluation run; predictions are ``score >= threshold``."""
    y = np.asarray(labels, dtype=np.int64)
    s = np.asarray(scores, dtype=np.float64)
    if y.size == 0 or y.size != s.size:
        raise ValueError("labels and scores must be non-empty and equal-length")
    cm = confusion_counts(y, (s >= threshold).astype(np.int64))
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else None
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else None
    if precision is None or recall is None or precision + recall == 0.0:
        f1 = None
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return MetricsReport(precision, recall, f1, roc_auc(y, s), cm,
                         project_id, technique, model_kind, fold_id)


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p_value: float
    n_effective: int
    significant_at_95: bool


EXACT_ENUMERATION_LIMIT = 12


def wilcoxon_signed_rank(a, b) -> WilcoxonResult:
    """Two-sided paired signed-rank test of ``a`` against ``b``.

    Zero differences are discarded; absolute differences get average ranks.
    The statistic is min(W+, W-). Up to 12 effective pairs the p-value is
    exact over all 2^n sign assignments; beyond that a normal approximation
    with tie correction is used. All-zero differences give p = 1.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    d = a - b
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0, False)
    ranks = _average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    if n <= EXACT_ENUMERATION_LIMIT:
        p = _exact_p(ranks, w)
    else:
        p = _normal_approx_p(ranks, w, n)
    return WilcoxonResult(w, p, n, p < 0.05)


def _exact_p(ranks: np.ndarray, w: float) -> float:
    """P(min(W+, W-) <= w) over all sign assignments."""
    n = ranks.size
    total = float(ranks.sum())
    # bit i of each assignment selects the sign of pair i
    assignments = np.arange(2 ** n, dtype=np.uint64)
    bits = (assignments[:, None] >> np.arange(n, dtype=np.uint64)) & 1
    w_plus = bits @ ranks
    hits = np.minimum(w_plus, total - w_plus) <= w + 1e-12
    return float(hits.sum()) / 2 ** n


def _normal_approx_p(ranks: np.ndarray, w: float, n: int) -> float:
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    # tie correction: each group of t tied ranks removes (t^3 - t) / 48
    _, counts = np.unique(ranks, return_counts=True)
    var -= float(((counts ** 3 - counts) / 48.0).sum())
    if var <= 0.0:
        return 1.0
    z = (w - mean) / math.sqrt(var)
    return min(1.0, math.erfc(-z / math.sqrt(2.0)))
