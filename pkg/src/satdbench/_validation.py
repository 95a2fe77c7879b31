"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def check_matrix(X) -> sp.csr_matrix:
    """Coerce input to a float64 CSR matrix with sorted indices."""
    if sp.issparse(X):
        X = X.tocsr()
    else:
        X = sp.csr_matrix(np.asarray(X, dtype=np.float64))
    if X.dtype != np.float64:
        X = X.astype(np.float64)
    if not X.has_sorted_indices:
        X = X.copy()
        X.sort_indices()
    return X


def check_X_y(X, y) -> tuple[sp.csr_matrix, np.ndarray]:
    """Validate a feature matrix with binary 0/1 labels."""
    X = check_matrix(X)
    y = np.asarray(y, dtype=np.int64).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError(
            f"X has {X.shape[0]} rows but y has {y.shape[0]} labels")
    bad = set(np.unique(y)) - {0, 1}
    if bad:
        raise ValueError(f"labels must be 0/1, found {sorted(bad)}")
    return X, y


def check_rng(random_state) -> np.random.Generator:
    """Build a Generator from an int seed, an existing Generator, or None."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)


def derive_seed(master: int | None, *key: int) -> int:
    """Derive a child seed from a master seed and an integer key path.

    The derivation is independent of call order, so parallel and serial
    execution of keyed jobs consume identical streams.
    """
    entropy = 0 if master is None else int(master)
    seq = np.random.SeedSequence(entropy=entropy, spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1, dtype=np.uint64)[0])
