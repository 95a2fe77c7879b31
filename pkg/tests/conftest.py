import os
import sys

import numpy as np
import pytest
import scipy.sparse as sp

sys.path.insert(0, os.path.dirname(__file__))

from synth import make_raw_rows, write_raw_csv  # noqa: E402

from satdbench.corpus import Corpus, CommentRecord, load_corpus, preprocess  # noqa: E402


def dataset_path():
    """Path to the real labeled-comment CSV, if the environment provides one."""
    env = os.environ.get("SATD_DATASET_CSV")
    if env and os.path.exists(env):
        return env
    here = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    candidate = os.path.join(here, "data", "comments.csv")
    if os.path.exists(candidate):
        return candidate
    return None


requires_dataset = pytest.mark.skipif(
    dataset_path() is None,
    reason="real labeled-comment dataset not available; set SATD_DATASET_CSV",
)


@pytest.fixture(scope="session")
def raw_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "raw.csv"
    write_raw_csv(make_raw_rows(), path)
    return path


@pytest.fixture(scope="session")
def raw_corpus(raw_csv):
    return load_corpus(raw_csv)


@pytest.fixture(scope="session")
def clean_corpus(raw_corpus):
    corpus, _ = preprocess(raw_corpus)
    return corpus


@pytest.fixture
def tiny_corpus():
    recs = [
        CommentRecord("alpha", "todo fix this hack", 1),
        CommentRecord("alpha", "iterate over the items", 0),
        CommentRecord("alpha", "parse the input stream", 0),
        CommentRecord("beta", "temporary workaround remove later", 1),
        CommentRecord("beta", "close the open handle", 0),
    ]
    return Corpus(tuple(recs))


def random_sparse_dataset(rng, n_min=5, n_maj=20, dim=6, density=0.6):
    """Small random minority/majority matrix for sampler tests."""
    n = n_min + n_maj
    dense = rng.random((n, dim)) * (rng.random((n, dim)) < density)
    X = sp.csr_matrix(dense)
    y = np.zeros(n, dtype=np.int64)
    y[:n_min] = 1
    return X, y
