"""Split protocols and the benchmark driver.

Two evaluation protocols: ``within`` (per-project stratified 10-fold, with a
tenth of the data held out per fold and the rest split 8:1 into train and
validation) and ``cross`` (train on all other projects, test on the target
project, repeated with derived seeds). Vocabularies are fitted per fold on
the training split only, and samplers touch only training rows. Every fold's
randomness derives from (master seed, project index, fold index), so fold
jobs can run in any order or in parallel without changing results.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._validation import derive_seed
from .balance import SAMPLERS, compute_class_weights, make_sampler
from .corpus import Corpus
from .exceptions import ProtocolError
from .features import TfidfFeaturizer
from .metrics import MetricsReport, compute_metrics, wilcoxon_signed_rank
from .models import MODEL_KINDS, make_model

PROTOCOLS = ("within", "cross")
TECHNIQUES = ("baseline", "cost", "smote", "bline", "adasyn", "svmsmt")

WITHIN_MIN_MINORITY = 10
BOOSTING_EARLY_STOPPING_ROUNDS = 10


@dataclass(frozen=True)
class Fold:
    fold_id: str
    project: str
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int


@dataclass(frozen=True)
class SplitPlan:
    protocol: str
    folds: tuple[Fold, ...]
    seed: int


def _stratified_deal(indices_by_class: list[np.ndarray], n_buckets: int,
                     rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle each class and deal round-robin into ``n_buckets`` buckets."""
    buckets: list[list[int]] = [[] for _ in range(n_buckets)]
    for class_indices in indices_by_class:
        shuffled = class_indices.copy()
        rng.shuffle(shuffled)
        for position, index in enumerate(shuffled):
            buckets[position % n_buckets].append(int(index))
    return [np.asarray(sorted(b), dtype=np.int64) for b in buckets]


def _split_validation(pool: np.ndarray, labels: np.ndarray, denominator: int,
                      rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Stratified 1/denominator validation carve-out of ``pool``."""
    val: list[int] = []
    for cls in (0, 1):
        members = pool[labels[pool] == cls]
        shuffled = members.copy()
        rng.shuffle(shuffled)
        val.extend(int(i) for pos, i in enumerate(shuffled)
                   if pos % denominator == 0)
    val_arr = np.asarray(sorted(val), dtype=np.int64)
    train = np.asarray(sorted(set(pool.tolist()) - set(val)), dtype=np.int64)
    return train, val_arr


def make_folds(corpus: Corpus, protocol: str, seed: int,
               n_folds: int = 10, n_repeats: int = 10) -> SplitPlan:
    """Build the evaluation folds for one protocol.

    ``within`` expects a single-project corpus with at least 10 minority
    rows; ``cross`` expects at least two projects and emits ``n_repeats``
    seeded repetitions per target project.
    """
    labels = np.fromiter((r.label for r in corpus), dtype=np.int64,
                         count=len(corpus))
    projects = corpus.projects()
    if protocol == "within":
        if len(projects) != 1:
            raise ProtocolError(
                f"within-project folds need a single project, got {projects}")
        project = projects[0]
        n_minority = int(labels.sum())
        if n_minority < WITHIN_MIN_MINORITY:
            raise ProtocolError(
                f"project {project!r} has {n_minority} minority rows; "
                f"within-project folds need at least {WITHIN_MIN_MINORITY}")
        by_class = [np.flatnonzero(labels == 0), np.flatnonzero(labels == 1)]
        rng = np.random.default_rng(derive_seed(seed, 0))
        test_buckets = _stratified_deal(by_class, n_folds, rng)
        folds = []
        all_indices = np.arange(len(corpus))
        for f, test in enumerate(test_buckets):
            rest = np.setdiff1d(all_indices, test)
            val_rng = np.random.default_rng(derive_seed(seed, f, 1))
            train, val = _split_validation(rest, labels, n_folds - 1, val_rng)
            folds.append(Fold(
                fold_id=f"{project}:fold{f}",
                project=project,
                train=train, validation=val, test=test,
                seed=derive_seed(seed, f, 2),
            ))
        return SplitPlan("within", tuple(folds), seed)

    if protocol == "cross":
        if len(projects) < 2:
            raise ProtocolError("cross-project folds need at least two projects")
        record_projects = np.asarray([r.project for r in corpus])
        folds = []
        for p_idx, target in enumerate(projects):
            test = np.flatnonzero(record_projects == target)
            pool = np.flatnonzero(record_projects != target)
            for rep in range(n_repeats):
                rng = np.random.default_rng(derive_seed(seed, p_idx, rep))
                train, val = _split_validation(pool, labels, 10, rng)
                folds.append(Fold(
                    fold_id=f"{target}:rep{rep}",
                    project=target,
                    train=train, validation=val, test=test,
                    seed=derive_seed(seed, p_idx, rep, 1),
                ))
        return SplitPlan("cross", tuple(folds), seed)

    raise ProtocolError(f"unknown protocol {protocol!r}; expected {PROTOCOLS}")


@dataclass(frozen=True)
class FoldError:
    fold_id: str
    project: str
    message: str


@dataclass(frozen=True)
class BenchmarkRun:
    protocol: str
    technique: str
    model_kind: str
    seed: int
    reports: tuple[MetricsReport, ...]
    errors: tuple[FoldError, ...] = ()

    def project_means(self, metric: str) -> dict[str, float | None]:
        """Mean of one metric over each project's folds (None excluded)."""
        per_project: dict[str, list[float]] = {}
        for report in self.reports:
            value = getattr(report, metric)
            per_project.setdefault(report.project_id, [])
            if value is not None:
                per_project[report.project_id].append(value)
        return {p: (sum(v) / len(v) if v else None)
                for p, v in per_project.items()}

    def mean(self, metric: str) -> float | None:
        """Unweighted mean over folds, then over projects."""
        means = [m for m in self.project_means(metric).values() if m is not None]
        return sum(means) / len(means) if means else None

    def excluded_count(self, metric: str) -> int:
        return sum(1 for r in self.reports if getattr(r, metric) is None)


def _run_fold(records, fold: Fold, technique: str, model_kind: str,
              min_df: int, hyper: dict | None,
              weight_scheme: str) -> MetricsReport:
    feat = TfidfFeaturizer(min_df=min_df)
    feat.fit([records[i].text for i in fold.train])
    X_train = feat.transform([records[i].text for i in fold.train])
    y_train = np.asarray([records[i].label for i in fold.train], dtype=np.int64)
    X_test = feat.transform([records[i].text for i in fold.test])
    y_test = np.asarray([records[i].label for i in fold.test], dtype=np.int64)

    class_weight = None
    if technique == "cost":
        class_weight = compute_class_weights(y_train, weight_scheme)
    elif technique in SAMPLERS:
        sampler = make_sampler(technique, random_state=fold.seed)
        X_train, y_train = sampler.fit_resample(X_train, y_train)
    elif technique != "baseline":
        raise ProtocolError(f"unknown technique {technique!r}; "
                            f"expected one of {TECHNIQUES}")

    model = make_model(model_kind, class_weight=class_weight,
                       random_state=fold.seed, hyper=hyper)
    if model_kind == "boosting" and fold.validation.size > 0:
        model.early_stopping_rounds = BOOSTING_EARLY_STOPPING_ROUNDS
        X_val = feat.transform([records[i].text for i in fold.validation])
        y_val = np.asarray([records[i].label for i in fold.validation],
                           dtype=np.int64)
        model.fit(X_train, y_train, eval_set=(X_val, y_val))
    else:
        model.fit(X_train, y_train)
    scores = model.predict_proba(X_test)[:, 1]
    return compute_metrics(y_test, scores, project_id=fold.project,
                           technique=technique, model_kind=model_kind,
                           fold_id=fold.fold_id)


def _fold_job(args):
    records, fold, technique, model_kind, min_df, hyper, weight_scheme = args
    try:
        return _run_fold(records, fold, technique, model_kind, min_df, hyper,
                         weight_scheme)
    except Exception as exc:  # per-fold failures must not abort the run
        return FoldError(fold.fold_id, fold.project, f"{type(exc).__name__}: {exc}")


def max_workers() -> int:
    """Parallelism cap from SATD_THREADS (default 1: serial, predictable)."""
    try:
        return max(1, int(os.environ.get("SATD_THREADS", "1")))
    except ValueError:
        return 1


def run_benchmark(corpus: Corpus, technique: str, model_kind: str,
                  protocol: str, seed: int = 0, n_folds: int = 10,
                  n_repeats: int = 10, min_df: int = 1,
                  hyper: dict | None = None,
                  weight_scheme: str = "inverse_frequency") -> BenchmarkRun:
    """Evaluate one (technique, model) cell under one protocol.

    Fold failures are recorded and skipped; the returned run carries both the
    per-fold reports and the errors so callers can flag incompleteness.
    """
    if technique not in TECHNIQUES:
        raise ProtocolError(f"unknown technique {technique!r}; "
                            f"expected one of {TECHNIQUES}")
    if model_kind not in MODEL_KINDS:
        raise ProtocolError(f"unknown model kind {model_kind!r}; "
                            f"expected one of {MODEL_KINDS}")

    folds: list[Fold] = []
    errors: list[FoldError] = []
    if protocol == "within":
        for project in corpus.projects():
            sub = corpus.subset([project])
            try:
                plan = make_folds(sub, "within", seed, n_folds=n_folds)
            except ProtocolError as exc:
                errors.append(FoldError(f"{project}:*", project, str(exc)))
                continue
            # fold indices refer to the subcorpus; remap to corpus indices
            mapping = np.flatnonzero(
                np.asarray([r.project for r in corpus]) == project)
            for fold in plan.folds:
                folds.append(Fold(fold.fold_id, fold.project,
                                  mapping[fold.train], mapping[fold.validation],
                                  mapping[fold.test], fold.seed))
    elif protocol == "cross":
        plan = make_folds(corpus, "cross", seed, n_repeats=n_repeats)
        folds.extend(plan.folds)
    else:
        raise ProtocolError(f"unknown protocol {protocol!r}; expected {PROTOCOLS}")

    jobs = [(corpus.records, fold, technique, model_kind, min_df, hyper,
             weight_scheme) for fold in folds]
    workers = max_workers()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_fold_job, jobs))
    else:
        outcomes = [_fold_job(job) for job in jobs]

    reports = []
    for outcome in outcomes:
        if isinstance(outcome, FoldError):
            errors.append(outcome)
        else:
            reports.append(outcome)
    reports.sort(key=lambda r: (r.project_id, r.fold_id))
    return BenchmarkRun(protocol, technique, model_kind, seed,
                        tuple(reports), tuple(errors))


METRICS = ("precision", "recall", "f1", "roc_auc")


def significance_against_baseline(runs: dict[tuple[str, str], BenchmarkRun]
                                  ) -> list[dict]:
    """Signed-rank tests of each technique against baseline, per model/metric.

    Pairs are per-project means (the pairing unit), following the default of
    ten matched project scores per comparison.
    """
    rows = []
    models = sorted({model for _, model in runs})
    for model in models:
        baseline = runs.get(("baseline", model))
        if baseline is None:
            continue
        for (technique, run_model), run in sorted(runs.items()):
            if run_model != model or technique == "baseline":
                continue
            for metric in METRICS:
                base_means = baseline.project_means(metric)
                tech_means = run.project_means(metric)
                shared = [p for p in sorted(base_means)
                          if base_means[p] is not None
                          and tech_means.get(p) is not None]
                if len(shared) < 2:
                    continue
                result = wilcoxon_signed_rank(
                    [tech_means[p] for p in shared],
                    [base_means[p] for p in shared])
                rows.append({
                    "model": model,
                    "technique": technique,
                    "metric": metric,
                    "n_projects": len(shared),
                    "statistic": result.statistic,
                    "p_value": result.p_value,
                    "significant_at_95": result.significant_at_95,
                })
    return rows


@dataclass(frozen=True)
class DuplicateImpactRow:
    protocol: str
    project: str
    f1_with_duplicates: float | None
    f1_deduplicated: float | None

    @property
    def delta(self) -> float | None:
        if self.f1_with_duplicates is None or self.f1_deduplicated is None:
            return None
        return self.f1_deduplicated - self.f1_with_duplicates


@dataclass(frozen=True)
class DuplicateImpactResult:
    rows: tuple[DuplicateImpactRow, ...]
    runs: dict = field(default_factory=dict, compare=False)

    def mean_f1(self, protocol: str, which: str) -> float | None:
        attr = ("f1_with_duplicates" if which == "with" else "f1_deduplicated")
        values = [getattr(r, attr) for r in self.rows
                  if r.protocol == protocol and getattr(r, attr) is not None]
        return sum(values) / len(values) if values else None


def duplicate_impact_run(corpus_with_dups: Corpus, corpus_deduped: Corpus,
                         technique: str, model_kind: str, seed: int = 0,
                         protocols: tuple[str, ...] = ("within", "cross"),
                         n_folds: int = 10, n_repeats: int = 10,
                         min_df: int = 1,
                         hyper: dict | None = None) -> DuplicateImpactResult:
    """Benchmark the same configuration on both corpus variants.

    Emits per-project F1 for each protocol so the effect of duplicate
    comments on the scores can be read off directly.
    """
    rows: list[DuplicateImpactRow] = []
    runs: dict[tuple[str, str], BenchmarkRun] = {}
    for protocol in protocols:
        reps = n_repeats if protocol == "cross" else n_folds
        with_dups = run_benchmark(corpus_with_dups, technique, model_kind,
                                  protocol, seed, n_folds=n_folds,
                                  n_repeats=reps, min_df=min_df, hyper=hyper)
        deduped = run_benchmark(corpus_deduped, technique, model_kind,
                                protocol, seed, n_folds=n_folds,
                                n_repeats=reps, min_df=min_df, hyper=hyper)
        runs[(protocol, "with")] = with_dups
        runs[(protocol, "dedup")] = deduped
        projects = sorted(set(list(with_dups.project_means("f1"))
                              + list(deduped.project_means("f1"))))
        wd = with_dups.project_means("f1")
        dd = deduped.project_means("f1")
        for project in projects:
            rows.append(DuplicateImpactRow(protocol, project,
                                           wd.get(project), dd.get(project)))
    return DuplicateImpactResult(tuple(rows), runs)


def format_float(value: float | None) -> str:
    return "NA" if value is None else f"{value:.6f}"


def write_benchmark_outputs(runs: dict[tuple[str, str], BenchmarkRun],
                            outdir, header_lines: tuple[str, ...] = (),
                            config: dict | None = None) -> list[str]:
    """Write one CSV per metric (rows: technique, columns: model kind), the
    signed-rank annotation table, and a machine-readable run manifest.

    Output is byte-deterministic for a fixed set of runs.
    """
    os.makedirs(outdir, exist_ok=True)
    techniques = sorted({t for t, _ in runs},
                        key=lambda t: TECHNIQUES.index(t) if t in TECHNIQUES else 99)
    models = sorted({m for _, m in runs},
                    key=lambda m: MODEL_KINDS.index(m) if m in MODEL_KINDS else 99)
    written = []
    for metric in METRICS:
        path = os.path.join(outdir, f"{metric}.csv")
        with open(path, "w", encoding="utf-8") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write("technique," + ",".join(models) + "\n")
            for technique in techniques:
                cells = []
                for model in models:
                    run = runs.get((technique, model))
                    cells.append(format_float(run.mean(metric)) if run else "NA")
                fh.write(technique + "," + ",".join(cells) + "\n")
        written.append(path)

    significance = significance_against_baseline(runs)
    path = os.path.join(outdir, "wilcoxon.csv")
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("model,technique,metric,n_projects,statistic,p_value,"
                 "significant_at_95\n")
        for row in significance:
            fh.write(f"{row['model']},{row['technique']},{row['metric']},"
                     f"{row['n_projects']},{format_float(row['statistic'])},"
                     f"{format_float(row['p_value'])},"
                     f"{str(row['significant_at_95']).lower()}\n")
    written.append(path)

    manifest = {
        "config": config or {},
        "runs": [
            {
                "technique": technique,
                "model": model,
                "protocol": run.protocol,
                "seed": run.seed,
                "fold_scores": [r.as_dict() for r in run.reports],
                "errors": [{"fold": e.fold_id, "project": e.project,
                            "message": e.message} for e in run.errors],
            }
            for (technique, model), run in sorted(runs.items())
        ],
    }
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(path)
    return written
