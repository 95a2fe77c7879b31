"""Sparse TF-IDF features over a deterministically indexed vocabulary.

Terms are indexed lexicographically, inverse document frequency is smoothed
(``ln((1 + n_docs) / (1 + df)) + 1``), and every vector is L2-normalized, so
Euclidean distance between vectors is monotone with cosine distance.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin

from .corpus import Corpus
from .exceptions import CorpusDataError, VocabularyError

VOCAB_SCHEMA = "satdbench-vocab/1"


def tokenize(text: str) -> list[str]:
    """Split normalized text on whitespace.

    Tokens shorter than two characters and purely numeric tokens are dropped;
    duplicates are kept so term frequency survives.
    """
    return [t for t in text.split() if len(t) >= 2 and not t.isdigit()]


@dataclass(frozen=True)
class Vocabulary:
    """Immutable fitted vocabulary.

    ``term_index`` maps term -> column, with columns 0..V-1 assigned in
    lexicographic term order. ``doc_freq[j]`` is the number of fitted
    documents containing the term at column j.
    """

    term_index: dict[str, int]
    doc_freq: np.ndarray
    n_docs: int

    def __len__(self) -> int:
        return len(self.term_index)

    @property
    def terms(self) -> list[str]:
        out = [""] * len(self.term_index)
        for term, idx in self.term_index.items():
            out[idx] = term
        return out

    def idf(self) -> np.ndarray:
        return np.log((1.0 + self.n_docs) / (1.0 + self.doc_freq)) + 1.0

    def save(self, path, header_extra: str = "") -> None:
        with open(path, "w", encoding="utf-8") as fh:
            extra = f" {header_extra}" if header_extra else ""
            fh.write(f"# {VOCAB_SCHEMA} n_docs={self.n_docs}{extra}\n")
            for term in sorted(self.term_index, key=self.term_index.get):
                idx = self.term_index[term]
                fh.write(f"{term}\t{idx}\t{int(self.doc_freq[idx])}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            if not header.startswith(f"# {VOCAB_SCHEMA}"):
                raise VocabularyError(f"unsupported vocabulary file: {path}")
            fields = dict(part.split("=", 1) for part in header.split()
                          if "=" in part)
            n_docs = int(fields["n_docs"])
            term_index: dict[str, int] = {}
            freq_by_index: dict[int, int] = {}
            for line in fh:
                term, idx, df = line.rstrip("\n").split("\t")
                term_index[term] = int(idx)
                freq_by_index[int(idx)] = int(df)
        doc_freq = np.zeros(len(term_index), dtype=np.int64)
        for idx, df in freq_by_index.items():
            doc_freq[idx] = df
        return cls(term_index, doc_freq, n_docs)

    def sha256(self) -> str:
        h = hashlib.sha256()
        h.update(f"{VOCAB_SCHEMA} n_docs={self.n_docs}".encode())
        for term in sorted(self.term_index, key=self.term_index.get):
            idx = self.term_index[term]
            h.update(f"{term}\t{idx}\t{int(self.doc_freq[idx])}".encode())
        return h.hexdigest()


def fit_vocabulary(docs: Sequence[Sequence[str]], min_df: int = 1) -> Vocabulary:
    """Build a vocabulary from tokenized documents.

    Terms present in fewer than ``min_df`` documents are dropped. Fitting an
    empty corpus (or one with no surviving terms) raises VocabularyError.
    """
    if min_df < 1:
        raise ValueError("min_df must be >= 1")
    if not docs:
        raise VocabularyError("cannot fit a vocabulary on an empty corpus")
    df_counter: dict[str, int] = {}
    for tokens in docs:
        for term in set(tokens):
            df_counter[term] = df_counter.get(term, 0) + 1
    terms = sorted(t for t, df in df_counter.items() if df >= min_df)
    if not terms:
        raise VocabularyError("no terms survive the min_df threshold")
    term_index = {t: i for i, t in enumerate(terms)}
    doc_freq = np.asarray([df_counter[t] for t in terms], dtype=np.int64)
    return Vocabulary(term_index, doc_freq, len(docs))


def vectorize(tokens: Sequence[str], vocab: Vocabulary) -> sp.csr_matrix:
    """Map one token list to a 1 x V L2-normalized TF-IDF row.

    Out-of-vocabulary tokens are ignored; an all-OOV input yields the zero
    vector.
    """
    return transform_docs([tokens], vocab)


def transform_docs(docs: Sequence[Sequence[str]], vocab: Vocabulary) -> sp.csr_matrix:
    """Vectorize many tokenized documents into one CSR matrix."""
    idf = vocab.idf()
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for tokens in docs:
        counts: dict[int, int] = {}
        for term in tokens:
            j = vocab.term_index.get(term)
            if j is not None:
                counts[j] = counts.get(j, 0) + 1
        row = sorted(counts)
        values = np.array([counts[j] * idf[j] for j in row], dtype=np.float64)
        norm = math.sqrt(float(np.dot(values, values)))
        if norm > 0.0:
            values /= norm
        indices.extend(row)
        data.extend(values.tolist())
        indptr.append(len(indices))
    X = sp.csr_matrix(
        (np.asarray(data, dtype=np.float64),
         np.asarray(indices, dtype=np.int32),
         np.asarray(indptr, dtype=np.int32)),
        shape=(len(docs), len(vocab)),
    )
    return X


class TfidfFeaturizer(BaseEstimator, TransformerMixin):
    """Estimator wrapper around :func:`fit_vocabulary` / :func:`transform_docs`.

    Operates on cleaned text strings; tokenization happens internally, so the
    featurizer slots directly after corpus preprocessing.
    """

    def __init__(self, min_df: int = 1):
        self.min_df = min_df

    def fit(self, docs: Sequence[str], y=None) -> "TfidfFeaturizer":
        self.vocabulary_ = fit_vocabulary([tokenize(d) for d in docs], self.min_df)
        return self

    def transform(self, docs: Sequence[str]) -> sp.csr_matrix:
        if not hasattr(self, "vocabulary_"):
            raise VocabularyError("featurizer is not fitted")
        return transform_docs([tokenize(d) for d in docs], self.vocabulary_)


@dataclass(frozen=True)
class LabeledMatrix:
    """Vectorized dataset with its class-imbalance bookkeeping."""

    X: sp.csr_matrix
    y: np.ndarray

    def __post_init__(self):
        if self.X.shape[0] != self.y.shape[0]:
            raise CorpusDataError("feature matrix and labels disagree in length")

    @property
    def minority_count(self) -> int:
        pos = int(self.y.sum())
        return min(pos, len(self.y) - pos)

    @property
    def majority_count(self) -> int:
        pos = int(self.y.sum())
        return max(pos, len(self.y) - pos)

    @property
    def minority_label(self) -> int:
        pos = int(self.y.sum())
        # ties resolve to the positive class
        return 1 if pos <= len(self.y) - pos else 0


def build_dataset(corpus: Corpus, vocab: Vocabulary) -> LabeledMatrix:
    """Vectorize a cleaned corpus against a fitted vocabulary."""
    X = transform_docs([tokenize(r.text) for r in corpus], vocab)
    y = np.fromiter((r.label for r in corpus), dtype=np.int64, count=len(corpus))
    return LabeledMatrix(X, y)
