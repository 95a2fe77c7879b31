"""Minority oversampling and class-weight schemes for imbalanced training sets.

All samplers share the same contract: ``fit_resample(X, y)`` returns the
original rows untouched (and in place) followed by synthetic minority rows,
and the result is a deterministic function of the input and ``random_state``.
Distances are Euclidean, which on L2-normalized TF-IDF rows is monotone with
cosine distance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator

from ._validation import check_matrix, check_rng, check_X_y
from .exceptions import SamplerError

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# nearest neighbors


def _pairwise_sq_dists(Q: sp.csr_matrix, P: sp.csr_matrix) -> np.ndarray:
    qn = np.asarray(Q.multiply(Q).sum(axis=1)).ravel()
    pn = np.asarray(P.multiply(P).sum(axis=1)).ravel()
    d2 = qn[:, None] + pn[None, :] - 2.0 * (Q @ P.T).toarray()
    np.maximum(d2, 0.0, out=d2)
    return d2


def knn_indices(queries: sp.csr_matrix, pool: sp.csr_matrix, k: int,
                self_indices: np.ndarray | None = None,
                chunk: int = 256) -> np.ndarray:
    """Indices of the k nearest pool rows for every query row.

    Ties break toward the lower pool index (stable sort on distance). When
    ``self_indices`` gives each query's own position in the pool, that entry
    is excluded.
    """
    n_pool = pool.shape[0]
    limit = n_pool - (1 if self_indices is not None else 0)
    if k > limit:
        raise SamplerError(
            f"k={k} neighbors requested but only {limit} candidates exist; "
            "reduce k")
    out = np.empty((queries.shape[0], k), dtype=np.int64)
    for start in range(0, queries.shape[0], chunk):
        stop = min(start + chunk, queries.shape[0])
        d2 = _pairwise_sq_dists(queries[start:stop], pool)
        if self_indices is not None:
            rows = np.arange(stop - start)
            d2[rows, self_indices[start:stop]] = np.inf
        order = np.argsort(d2, axis=1, kind="stable")
        out[start:stop] = order[:, :k]
    return out


def nearest_neighbors(X, query_index: int, k: int) -> list[int]:
    """k nearest rows of ``X`` to row ``query_index``, self excluded."""
    X = check_matrix(X)
    idx = knn_indices(X[[query_index]], X, k,
                      self_indices=np.asarray([query_index]))
    return idx[0].tolist()


# ---------------------------------------------------------------------------
# class weights


@dataclass(frozen=True)
class ClassWeights:
    """Per-class loss weights; both entries are finite and positive."""

    w_minority: float
    w_majority: float
    minority_label: int

    def as_dict(self) -> dict[int, float]:
        return {self.minority_label: self.w_minority,
                1 - self.minority_label: self.w_majority}

    def per_instance(self, y: np.ndarray) -> np.ndarray:
        w = np.where(np.asarray(y) == self.minority_label,
                     self.w_minority, self.w_majority)
        return w.astype(np.float64)


WEIGHT_SCHEMES = ("inverse_frequency", "prevalence")


def compute_class_weights(y, scheme: str = "inverse_frequency") -> ClassWeights:
    """Compute class weights from a binary label vector.

    ``inverse_frequency`` assigns each class ``total / (2 * count)``, so the
    rarer class carries the larger weight. ``prevalence`` assigns each class
    its own share of the data (``count / total``); it down-weights the rare
    class and exists to replicate setups that define weights that way.
    """
    y = np.asarray(y, dtype=np.int64).ravel()
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SamplerError("class weights need both classes present")
    minority_label = 1 if n_pos <= n_neg else 0
    n_min, n_maj = (n_pos, n_neg) if minority_label == 1 else (n_neg, n_pos)
    total = n_min + n_maj
    if scheme == "inverse_frequency":
        return ClassWeights(total / (2.0 * n_min), total / (2.0 * n_maj),
                            minority_label)
    if scheme == "prevalence":
        return ClassWeights(n_min / total, n_maj / total, minority_label)
    raise ValueError(f"unknown weight scheme {scheme!r}; "
                     f"expected one of {WEIGHT_SCHEMES}")


# ---------------------------------------------------------------------------
# samplers


@dataclass(frozen=True)
class SynthesisPlan:
    """How many synthetics each minority row seeds."""

    per_seed_counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.per_seed_counts.sum())


def _interpolate(R: sp.csr_matrix, base: np.ndarray, nbr: np.ndarray,
                 u: np.ndarray, direction: np.ndarray | None = None) -> sp.csr_matrix:
    """Synthesize ``R[base] + d*u*(R[nbr] - R[base])`` rows (d defaults to +1).

    Support of each synthetic row is contained in the union of its two
    parents' supports.
    """
    B = R[base]
    D = R[nbr] - B
    step = u if direction is None else direction * u
    synth = B + sp.diags(step) @ D
    synth = sp.csr_matrix(synth)
    synth.eliminate_zeros()
    synth.sort_indices()
    return synth


class BaseOverSampler(BaseEstimator):
    """Shared plumbing for the SMOTE family."""

    def __init__(self, k_neighbors: int = 5, sampling_rate: float = 1.0,
                 random_state: int | None = None):
        self.k_neighbors = k_neighbors
        self.sampling_rate = sampling_rate
        self.random_state = random_state

    def _validate(self):
        if self.k_neighbors < 1:
            raise SamplerError("k_neighbors must be >= 1")
        if not 0.0 < self.sampling_rate <= 1.0:
            raise SamplerError("sampling_rate must lie in (0, 1]")

    def fit_resample(self, X, y) -> tuple[sp.csr_matrix, np.ndarray]:
        """Append synthetic minority rows until the target ratio is met.

        The target minority size is ``floor(sampling_rate * majority)``; an
        already balanced input passes through unchanged.
        """
        self._validate()
        X, y = check_X_y(X, y)
        n_pos = int((y == 1).sum())
        n_neg = len(y) - n_pos
        if n_pos == 0 or n_neg == 0:
            raise SamplerError("oversampling needs both classes present")
        minority_label = 1 if n_pos <= n_neg else 0
        n_min, n_maj = (n_pos, n_neg) if minority_label == 1 else (n_neg, n_pos)
        if n_min < 2:
            raise SamplerError("oversampling needs at least two minority rows")

        n_new = int(np.floor(self.sampling_rate * n_maj)) - n_min
        if n_new <= 0:
            return X.copy(), y.copy()

        min_idx = np.flatnonzero(y == minority_label)
        X_min = X[min_idx]
        k_eff = min(self.k_neighbors, n_min - 1)
        if k_eff < self.k_neighbors:
            logger.warning("%s: shrinking k_neighbors from %d to %d (only %d "
                           "minority rows)", type(self).__name__,
                           self.k_neighbors, k_eff, n_min)

        rng = check_rng(self.random_state)
        synth = self._synthesize(X, y, X_min, min_idx, minority_label,
                                 k_eff, n_new, rng)
        X_out = sp.csr_matrix(sp.vstack([X, synth]))
        X_out.sort_indices()
        y_out = np.concatenate([y, np.full(synth.shape[0], minority_label,
                                           dtype=y.dtype)])
        return X_out, y_out

    def _synthesize(self, X, y, X_min, min_idx, minority_label, k_eff,
                    n_new, rng) -> sp.csr_matrix:
        raise NotImplementedError


class SMOTE(BaseOverSampler):
    """Plain synthetic minority oversampling.

    Each synthetic row sits on the segment between a random minority seed and
    one of its k nearest minority neighbors: ``x + u * (x_nn - x)`` with
    ``u`` uniform on [0, 1].
    """

    def _synthesize(self, X, y, X_min, min_idx, minority_label, k_eff,
                    n_new, rng) -> sp.csr_matrix:
        nn = knn_indices(X_min, X_min, k_eff,
                         self_indices=np.arange(X_min.shape[0]))
        base = rng.integers(0, X_min.shape[0], n_new)
        pick = rng.integers(0, k_eff, n_new)
        u = rng.random(n_new)
        return _interpolate(X_min, base, nn[base, pick], u)


class BorderlineSMOTE(BaseOverSampler):
    """SMOTE seeded only from minority rows near the class boundary.

    Each minority row is classed by the majority share among its
    ``m_neighbors`` whole-data neighbors: all-majority rows are noise,
    rows with at least half majority are danger (the only seeds), the rest
    are safe. With no danger rows the sampler falls back to plain SMOTE.
    """

    def __init__(self, k_neighbors: int = 5, m_neighbors: int = 10,
                 sampling_rate: float = 1.0, random_state: int | None = None):
        super().__init__(k_neighbors, sampling_rate, random_state)
        self.m_neighbors = m_neighbors

    def _validate(self):
        super()._validate()
        if self.m_neighbors < self.k_neighbors:
            raise SamplerError("m_neighbors must be >= k_neighbors")

    def _synthesize(self, X, y, X_min, min_idx, minority_label, k_eff,
                    n_new, rng) -> sp.csr_matrix:
        _, danger, _ = borderline_partition(X, y, self.m_neighbors,
                                            minority_label)
        if danger.size == 0:
            logger.warning("BorderlineSMOTE: no danger rows; falling back to "
                           "plain SMOTE")
            return SMOTE._synthesize(self, X, y, X_min, min_idx,
                                     minority_label, k_eff, n_new, rng)
        # positions of danger rows within the minority block
        danger_pos = np.searchsorted(min_idx, danger)
        nn = knn_indices(X_min, X_min, k_eff,
                         self_indices=np.arange(X_min.shape[0]))
        base = danger_pos[rng.integers(0, danger_pos.size, n_new)]
        pick = rng.integers(0, k_eff, n_new)
        u = rng.random(n_new)
        return _interpolate(X_min, base, nn[base, pick], u)


def borderline_partition(X, y, m_neighbors: int,
                         minority_label: int | None = None
                         ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split minority rows into (noise, danger, safe) index arrays.

    Counting majority members among each minority row's ``m`` whole-data
    nearest neighbors: noise has all m, danger has at least m/2 but fewer
    than m, safe has fewer than m/2. The three sets partition the minority.
    """
    X, y = check_X_y(X, y)
    if minority_label is None:
        minority_label = 1 if (y == 1).sum() <= (y == 0).sum() else 0
    min_idx = np.flatnonzero(y == minority_label)
    m_eff = min(m_neighbors, X.shape[0] - 1)
    nn = knn_indices(X[min_idx], X, m_eff, self_indices=min_idx)
    maj_counts = (y[nn] != minority_label).sum(axis=1)
    noise = maj_counts == m_eff
    danger = (2 * maj_counts >= m_eff) & ~noise
    safe = ~noise & ~danger
    return min_idx[noise], min_idx[danger], min_idx[safe]


class ADASYN(BaseOverSampler):
    """Density-adaptive SMOTE variant.

    Each minority row i gets a difficulty score: the fraction of majority
    rows among its k whole-data neighbors. Scores are normalized and the
    total synthesis budget is spread proportionally (rounded, remainders
    going to the highest scores), so rows deep in majority territory seed
    the most synthetics. All-zero scores fall back to plain SMOTE.
    """

    def plan(self, X, y) -> SynthesisPlan:
        """Per-minority-row synthetic allocation for the current config."""
        self._validate()
        X, y = check_X_y(X, y)
        n_pos = int((y == 1).sum())
        minority_label = 1 if n_pos <= len(y) - n_pos else 0
        min_idx = np.flatnonzero(y == minority_label)
        n_min = min_idx.size
        n_maj = len(y) - n_min
        n_new = int(np.floor(self.sampling_rate * n_maj)) - n_min
        if n_new <= 0:
            return SynthesisPlan(np.zeros(n_min, dtype=np.int64))
        scores = self._difficulty(X, y, min_idx, minority_label)
        if scores.sum() == 0.0:
            return SynthesisPlan(np.zeros(n_min, dtype=np.int64))
        return SynthesisPlan(_allocate(scores / scores.sum(), n_new))

    def _difficulty(self, X, y, min_idx, minority_label) -> np.ndarray:
        k_eff = min(self.k_neighbors, X.shape[0] - 1)
        nn = knn_indices(X[min_idx], X, k_eff, self_indices=min_idx)
        return (y[nn] != minority_label).sum(axis=1) / float(k_eff)

    def _synthesize(self, X, y, X_min, min_idx, minority_label, k_eff,
                    n_new, rng) -> sp.csr_matrix:
        scores = self._difficulty(X, y, min_idx, minority_label)
        if scores.sum() == 0.0:
            logger.warning("ADASYN: no minority row borders the majority; "
                           "falling back to plain SMOTE")
            return SMOTE._synthesize(self, X, y, X_min, min_idx,
                                     minority_label, k_eff, n_new, rng)
        counts = _allocate(scores / scores.sum(), n_new)
        base = np.repeat(np.arange(X_min.shape[0]), counts)
        nn = knn_indices(X_min, X_min, k_eff,
                         self_indices=np.arange(X_min.shape[0]))
        pick = rng.integers(0, k_eff, n_new)
        u = rng.random(n_new)
        return _interpolate(X_min, base, nn[base, pick], u)


def _allocate(weights: np.ndarray, total: int) -> np.ndarray:
    """Round ``weights * total`` to integers summing exactly to ``total``.

    Remainders are settled on the highest-weight entries (added) or the
    lowest-weight nonzero entries (removed), preserving monotonicity in the
    weights.
    """
    counts = np.rint(weights * total).astype(np.int64)
    diff = total - int(counts.sum())
    if diff > 0:
        order = np.lexsort((np.arange(weights.size), -weights))
        for i in order[:diff]:
            counts[i] += 1
    elif diff < 0:
        order = np.lexsort((-np.arange(weights.size), weights))
        removed = 0
        for i in order:
            if removed == -diff:
                break
            if counts[i] > 0:
                counts[i] -= 1
                removed += 1
    return counts


class SVMSMOTE(BaseOverSampler):
    """SMOTE seeded from minority rows at the margin of a linear separator.

    A max-margin separator is fitted by regularized hinge-loss subgradient
    descent; minority rows with ``|w.x + b| <= 1`` become seeds. Seeds whose
    m-neighborhood is minority-dominated extrapolate away from their nearest
    minority neighbor (expanding the minority region); the rest interpolate
    toward a random one of their k minority neighbors. An empty seed set
    falls back to plain SMOTE.
    """

    def __init__(self, k_neighbors: int = 5, m_neighbors: int = 10,
                 sampling_rate: float = 1.0, random_state: int | None = None,
                 svm_reg: float = 1e-3, svm_epochs: int = 300,
                 svm_learning_rate: float = 1.0):
        super().__init__(k_neighbors, sampling_rate, random_state)
        self.m_neighbors = m_neighbors
        self.svm_reg = svm_reg
        self.svm_epochs = svm_epochs
        self.svm_learning_rate = svm_learning_rate

    def margin_seeds(self, X, y) -> np.ndarray:
        """Minority row indices within or on the fitted separator's margin."""
        X, y = check_X_y(X, y)
        minority_label = 1 if (y == 1).sum() <= (y == 0).sum() else 0
        min_idx = np.flatnonzero(y == minority_label)
        w, b, _ = fit_linear_svm(X, np.where(y == minority_label, 1.0, -1.0),
                                 self.svm_reg, self.svm_epochs,
                                 self.svm_learning_rate)
        margins = np.abs(X[min_idx] @ w + b)
        return min_idx[margins <= 1.0 + 1e-12]

    def _synthesize(self, X, y, X_min, min_idx, minority_label, k_eff,
                    n_new, rng) -> sp.csr_matrix:
        seeds = self.margin_seeds(X, y)
        if seeds.size == 0:
            logger.warning("SVMSMOTE: no minority row lies in the margin; "
                           "falling back to plain SMOTE")
            return SMOTE._synthesize(self, X, y, X_min, min_idx,
                                     minority_label, k_eff, n_new, rng)
        seed_pos = np.searchsorted(min_idx, seeds)
        m_eff = min(self.m_neighbors, X.shape[0] - 1)
        whole_nn = knn_indices(X[seeds], X, m_eff, self_indices=seeds)
        minority_share = (y[whole_nn] == minority_label).sum(axis=1)
        dominated = 2 * minority_share > m_eff

        nn = knn_indices(X_min, X_min, k_eff,
                         self_indices=np.arange(X_min.shape[0]))
        choice = rng.integers(0, seed_pos.size, n_new)
        base = seed_pos[choice]
        pick = rng.integers(0, k_eff, n_new)
        u = rng.random(n_new)
        extrapolate = dominated[choice]
        # extrapolation always steps away from the closest minority neighbor
        nbr = np.where(extrapolate, nn[base, 0], nn[base, pick])
        direction = np.where(extrapolate, -1.0, 1.0)
        return _interpolate(X_min, base, nbr, u, direction)


def _hinge_objective(X, y_pm, w, b, reg) -> float:
    margin = y_pm * (X @ w + b)
    return 0.5 * reg * float(w @ w) + float(np.maximum(0.0, 1.0 - margin).mean())


def _margin_rescale(margins: np.ndarray, reg: float, w_sq: float) -> float:
    """Exact line search along the ray ``s * (w, b)``.

    The 1-D objective ``reg/2 * s^2 * |w|^2 + mean(max(0, 1 - s * m))`` is
    piecewise quadratic with breakpoints at s = 1/m for positive margins; the
    optimum is found by scanning the segments.
    """
    a = 0.5 * reg * w_sq
    m = margins
    if a <= 0.0 or not np.any(m > 0):
        return 1.0
    n = m.size
    breakpoints = np.concatenate(
        [[0.0], np.sort(1.0 / np.unique(m[m > 0])), [np.inf]])

    def f(s):
        return a * s * s + float(np.maximum(0.0, 1.0 - s * m).mean())

    best_s, best_f = 1.0, f(1.0)
    for lo, hi in zip(breakpoints[:-1], breakpoints[1:]):
        probe = lo + 1.0 if np.isinf(hi) else 0.5 * (lo + hi)
        s = float(m[(probe * m) < 1.0].sum()) / n / (2.0 * a)
        s = max(s, lo)
        if not np.isinf(hi):
            s = min(s, hi)
        fs = f(s)
        if fs < best_f:
            best_s, best_f = s, fs
    return best_s


def fit_linear_svm(X: sp.csr_matrix, y_pm: np.ndarray, reg: float,
                   epochs: int, learning_rate: float = 1.0
                   ) -> tuple[np.ndarray, float, bool]:
    """Fit ``sign(w.x + b)`` by full-batch subgradient descent on hinge loss.

    Uses a 1/(reg*t) step schedule with suffix averaging over the second half
    of the epochs, then an exact rescale along the averaged direction. When
    the objective is still improving at the epoch budget the best iterate is
    returned anyway, with a logged warning.
    """
    n, V = X.shape
    w = np.zeros(V)
    b = 0.0
    best = (np.inf, w.copy(), b)
    w_acc = np.zeros(V)
    b_acc = 0.0
    acc_n = 0
    tail_start = epochs // 2
    recent_gain = np.inf
    for t in range(epochs):
        obj = _hinge_objective(X, y_pm, w, b, reg)
        if obj < best[0]:
            if t >= epochs - max(10, epochs // 4):
                recent_gain = best[0] - obj
            best = (obj, w.copy(), b)
        margin = y_pm * (X @ w + b)
        active = margin < 1.0
        lr = learning_rate / (reg * (t + 2))
        grad_w = reg * w - np.asarray(X[active].T @ y_pm[active]).ravel() / n
        grad_b = -float(y_pm[active].sum()) / n
        w = w - lr * grad_w
        b = b - lr * grad_b
        if t >= tail_start:
            w_acc += w
            b_acc += b
            acc_n += 1
    w_avg, b_avg = w_acc / acc_n, b_acc / acc_n
    s = _margin_rescale(y_pm * (X @ w_avg + b_avg), reg, float(w_avg @ w_avg))
    candidate = (w_avg * s, b_avg * s)
    if _hinge_objective(X, y_pm, *candidate, reg) <= best[0]:
        w_out, b_out = candidate
    else:
        w_out, b_out = best[1], best[2]
    converged = recent_gain <= 1e-8 * max(1.0, best[0])
    if not converged:
        logger.warning("linear separator still improving after %d epochs; "
                       "using best iterate", epochs)
    return w_out, b_out, converged


SAMPLERS = {
    "smote": SMOTE,
    "bline": BorderlineSMOTE,
    "adasyn": ADASYN,
    "svmsmt": SVMSMOTE,
}


def make_sampler(technique: str, k_neighbors: int = 5, m_neighbors: int = 10,
                 sampling_rate: float = 1.0,
                 random_state: int | None = None) -> BaseOverSampler:
    """Instantiate a sampler by its CLI technique token."""
    try:
        cls = SAMPLERS[technique]
    except KeyError:
        raise SamplerError(f"unknown sampling technique {technique!r}; "
                           f"expected one of {sorted(SAMPLERS)}") from None
    if cls is SMOTE or cls is ADASYN:
        return cls(k_neighbors=k_neighbors, sampling_rate=sampling_rate,
                   random_state=random_state)
    return cls(k_neighbors=k_neighbors, m_neighbors=m_neighbors,
               sampling_rate=sampling_rate, random_state=random_state)
