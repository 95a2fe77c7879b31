"""Comment corpus loading, cleaning, and deduplication.

The raw input is a CSV of labeled source-code comments with columns
``projectname,classification,commenttext``. Every classification other than
``WITHOUT_CLASSIFICATION`` is consolidated into the positive (SATD) class.
Cleaning runs in a fixed order: duplicate removal on the raw text, then
normalization, tokenization, stop-word/lemma reduction, and a hollow-comment
filter.
"""

from __future__ import annotations

import csv
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from .exceptions import CorpusDataError, CorpusSchemaError
from .stopwords import STOPWORDS

SATD = 1
NON_SATD = 0

RAW_COLUMNS = ("projectname", "classification", "commenttext")
NON_SATD_TOKEN = "WITHOUT_CLASSIFICATION"
SATD_TOKENS = frozenset({
    "DESIGN", "IMPLEMENTATION", "DEFECT", "TEST", "DOCUMENTATION",
    "REQUIREMENT",
})

# Characters stripped during normalization. Each occurrence becomes a space
# so adjoining words do not fuse into a single token.
STRIP_CHARS = "#@&/'\"()[]{}!"

_URL_RE = re.compile(r"(?:https?://|www\.)\S+")
_WS_RE = re.compile(r"\s+")

# Consonants that English doubles before -ing/-ed ("stopped", "running").
_DOUBLED = frozenset("bdgmnprt")


@dataclass(frozen=True)
class CommentRecord:
    """One labeled comment. ``label`` is 1 for SATD, 0 otherwise."""

    project: str
    text: str
    label: int


@dataclass(frozen=True)
class Corpus:
    records: tuple[CommentRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[CommentRecord]:
        return iter(self.records)

    def projects(self) -> list[str]:
        return sorted({r.project for r in self.records})

    def per_project_counts(self) -> dict[str, tuple[int, int]]:
        """Mapping project -> (total comments, SATD comments)."""
        totals: Counter[str] = Counter()
        satd: Counter[str] = Counter()
        for rec in self.records:
            totals[rec.project] += 1
            satd[rec.project] += rec.label
        return {p: (totals[p], satd[p]) for p in totals}

    def satd_count(self) -> int:
        return sum(r.label for r in self.records)

    def subset(self, projects: Iterable[str]) -> "Corpus":
        wanted = set(projects)
        return Corpus(tuple(r for r in self.records if r.project in wanted))


@dataclass(frozen=True)
class DedupStats:
    removed_count: int
    removed_fraction: float
    per_project_removed: Mapping[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class PreprocessConfig:
    dedupe: bool = True
    min_chars: int = 3
    strip_chars: str = STRIP_CHARS
    remove_stopwords: bool = True
    lemmatize: bool = True


@dataclass(frozen=True)
class PreprocessStats:
    input_count: int
    output_count: int
    dedup: DedupStats
    per_project_counts: Mapping[str, tuple[int, int]]


def load_corpus(path, project_filter: set[str] | None = None,
                strict_labels: bool = True) -> Corpus:
    """Read the raw labeled-comment CSV, preserving row order.

    Raises CorpusSchemaError when a required column is missing and
    CorpusDataError (with the 1-based data row number) for rows with missing
    values or, under ``strict_labels``, an unrecognized classification token.
    """
    records: list[CommentRecord] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in RAW_COLUMNS:
            if column not in header:
                raise CorpusSchemaError(f"missing column {column!r} in {path}")
        for row_no, row in enumerate(reader, start=1):
            project = (row.get("projectname") or "").strip()
            token = (row.get("classification") or "").strip().upper()
            text = row.get("commenttext")
            if not project or not token or text is None:
                raise CorpusDataError(f"row {row_no}: incomplete record")
            if token == NON_SATD_TOKEN:
                label = NON_SATD
            elif not strict_labels or token in SATD_TOKENS:
                label = SATD
            else:
                raise CorpusDataError(
                    f"row {row_no}: unknown classification token {token!r}")
            if project_filter is not None and project not in project_filter:
                continue
            records.append(CommentRecord(project, text, label))
    return Corpus(tuple(records))


def dedupe(corpus: Corpus) -> tuple[Corpus, DedupStats]:
    """Drop exact duplicate comments, keeping the first occurrence.

    The comparison key is the whitespace-trimmed raw text, applied globally
    across projects.
    """
    seen: set[str] = set()
    kept: list[CommentRecord] = []
    removed: Counter[str] = Counter()
    for rec in corpus:
        key = rec.text.strip()
        if key in seen:
            removed[rec.project] += 1
        else:
            seen.add(key)
            kept.append(rec)
    total = len(corpus)
    removed_count = total - len(kept)
    fraction = removed_count / total if total else 0.0
    return Corpus(tuple(kept)), DedupStats(removed_count, fraction, dict(removed))


def normalize_text(text: str, strip_chars: str = STRIP_CHARS) -> str:
    """Lowercase and scrub one comment.

    Hyperlinks are removed first, then the configured special characters and
    newlines are replaced by spaces, and whitespace runs collapse to a single
    space.
    """
    t = text.lower()
    t = _URL_RE.sub(" ", t)
    t = t.translate({ord(c): " " for c in strip_chars + "\n\r\t"})
    return _WS_RE.sub(" ", t).strip()


def lemmatize_token(token: str) -> str:
    """Map a token to a base form with ordered suffix rules.

    Rules: plural -ies/-es/-s, then -ing/-ed stripping with a de-doubling
    step; a transform only fires when it leaves a stem of at least three
    characters. The first matching rule wins.
    """
    if token.endswith("ies") and len(token) >= 6:
        return token[:-3] + "y"
    if token.endswith("es") and len(token) >= 5 \
            and token[:-2].endswith(("ss", "x", "z", "ch", "sh", "o")):
        return token[:-2]
    if token.endswith("s") and len(token) >= 4 \
            and not token.endswith(("ss", "us", "is")):
        return token[:-1]
    for suffix in ("ing", "ed"):
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            stem = token[: -len(suffix)]
            if len(stem) >= 4 and stem[-1] == stem[-2] and stem[-1] in _DOUBLED:
                stem = stem[:-1]
            return stem
    return token


def reduce_tokens(tokens: Sequence[str], remove_stopwords: bool = True,
                  lemmatize: bool = True) -> list[str]:
    """Drop stop-list members, then map survivors to base forms."""
    out = []
    for token in tokens:
        if remove_stopwords and token in STOPWORDS:
            continue
        out.append(lemmatize_token(token) if lemmatize else token)
    return out


def filter_hollow(tokens: Sequence[str], min_chars: int = 3) -> bool:
    """Keep a comment only if it carries content.

    Returns False when the joined comment has at most ``min_chars``
    characters or no token contains an alphabetic character.
    """
    joined = " ".join(tokens)
    if len(joined) <= min_chars:
        return False
    return any(c.isalpha() for c in joined)


def preprocess(corpus: Corpus,
               config: PreprocessConfig = PreprocessConfig()) -> tuple[Corpus, PreprocessStats]:
    """Run the full cleaning pipeline over a raw corpus.

    Order: dedupe -> normalize_text -> tokenize -> reduce_tokens ->
    filter_hollow. Labels and project ids pass through unchanged; the stored
    text of each surviving record is its reduced tokens joined by spaces.
    """
    from .features import tokenize  # tokenization rules live with the featurizer

    input_count = len(corpus)
    if config.dedupe:
        corpus, dedup_stats = dedupe(corpus)
    else:
        dedup_stats = DedupStats(0, 0.0, {})

    kept: list[CommentRecord] = []
    for rec in corpus:
        tokens = tokenize(normalize_text(rec.text, config.strip_chars))
        tokens = reduce_tokens(tokens, config.remove_stopwords, config.lemmatize)
        if filter_hollow(tokens, config.min_chars):
            kept.append(CommentRecord(rec.project, " ".join(tokens), rec.label))

    cleaned = Corpus(tuple(kept))
    stats = PreprocessStats(
        input_count=input_count,
        output_count=len(cleaned),
        dedup=dedup_stats,
        per_project_counts=cleaned.per_project_counts(),
    )
    return cleaned, stats


def write_corpus(corpus: Corpus, path, header_lines: Sequence[str] = ()) -> None:
    """Write a cleaned corpus as ``project<TAB>label<TAB>text`` lines.

    ``header_lines`` are emitted first, prefixed with ``#``.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        for rec in corpus:
            fh.write(f"{rec.project}\t{rec.label}\t{rec.text}\n")


def read_corpus(path) -> Corpus:
    """Read a corpus written by :func:`write_corpus`."""
    records: list[CommentRecord] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t", 2)
            if len(parts) != 3 or parts[1] not in ("0", "1"):
                raise CorpusDataError(f"line {line_no}: malformed corpus line")
            records.append(CommentRecord(parts[0], parts[2], int(parts[1])))
    return Corpus(tuple(records))
