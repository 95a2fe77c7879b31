"""Command-line surface.

Subcommands: preprocess, benchmark, train, predict, explain, dup-impact.
Exit codes are stable: 0 success (possibly with warnings), 1 runtime
failure, 2 usage or configuration error. Every output file starts with a
manifest header (tool version, seed, config hash) and all commands are
deterministic under a fixed --seed. SATD_THREADS caps fold parallelism.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import socket
import sys

import numpy as np

from . import __version__
from .balance import compute_class_weights, make_sampler, SAMPLERS
from .benchmark import (
    MODEL_KINDS,
    PROTOCOLS,
    TECHNIQUES,
    duplicate_impact_run,
    format_float,
    run_benchmark,
    write_benchmark_outputs,
)
from .corpus import (
    Corpus,
    PreprocessConfig,
    load_corpus,
    normalize_text,
    preprocess,
    read_corpus,
    reduce_tokens,
    write_corpus,
)
from .exceptions import (
    CorpusDataError,
    CorpusSchemaError,
    ModelFormatError,
    ProtocolError,
    SatdBenchError,
    VocabularyError,
)
from .explain import (
    background_means,
    contribution_stats,
    feature_diff,
    linear_shap_batch,
    write_contributions_csv,
    write_diff_csv,
)
from .features import TfidfFeaturizer, Vocabulary, tokenize, transform_docs
from .models import TrainedModel, load_model, make_model, save_model

USAGE_ERRORS = (CorpusSchemaError, CorpusDataError, ModelFormatError,
                VocabularyError, ProtocolError, FileNotFoundError)

LABEL_NAMES = {0: "NonSATD", 1: "SATD"}


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def manifest_header(seed, config: dict) -> tuple[str, ...]:
    return (f"satdbench {__version__} seed={seed} config={config_hash(config)}",)


def _parse_scalar(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def parse_hyper(entries: list[str]) -> dict[str, dict]:
    """Parse repeated --hyper MODEL.KEY=VALUE overrides."""
    hyper: dict[str, dict] = {}
    for entry in entries or []:
        if "=" not in entry or "." not in entry.split("=", 1)[0]:
            raise ProtocolError(
                f"bad --hyper {entry!r}; expected MODEL.KEY=VALUE")
        key, value = entry.split("=", 1)
        model, name = key.split(".", 1)
        if model not in MODEL_KINDS:
            raise ProtocolError(f"--hyper names unknown model {model!r}")
        hyper.setdefault(model, {})[name] = _parse_scalar(value)
    return hyper


def read_config_file(path) -> dict:
    """Flat key=value configuration; '#' starts a comment line."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ProtocolError(f"{path}:{line_no}: expected key=value")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def _csv_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


# ---------------------------------------------------------------------------
# preprocess


def cmd_preprocess(args) -> int:
    if not os.path.exists(args.input):
        print(f"error: input file not found: {args.input}", file=sys.stderr)
        return 2
    project_filter = set(_csv_list(args.projects)) if args.projects else None
    corpus = load_corpus(args.input, project_filter=project_filter,
                         strict_labels=not args.lax_labels)
    if len(corpus) == 0:
        print("error: input file has no data rows", file=sys.stderr)
        return 2
    config = PreprocessConfig(dedupe=not args.no_dedupe,
                              min_chars=args.min_chars)
    cleaned, stats = preprocess(corpus, config)
    header = manifest_header("-", {"command": "preprocess",
                                   "input": os.path.basename(args.input),
                                   "dedupe": not args.no_dedupe,
                                   "min_chars": args.min_chars})
    write_corpus(cleaned, args.output, header_lines=header)

    dup = stats.dedup
    summary = {
        "manifest": {"tool": f"satdbench/{__version__}",
                     "config": {"dedupe": not args.no_dedupe,
                                "min_chars": args.min_chars}},
        "input_comments": stats.input_count,
        "output_comments": stats.output_count,
        "output_satd": cleaned.satd_count(),
        "duplicates_removed": dup.removed_count,
        "duplicates_removed_pct": round(100.0 * dup.removed_fraction, 2),
        "per_project": {p: {"comments": total, "satd": satd}
                        for p, (total, satd) in
                        sorted(stats.per_project_counts.items())},
    }
    if args.stats_out:
        with open(args.stats_out, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(f"comments: {stats.input_count} in, {stats.output_count} out "
          f"({cleaned.satd_count()} SATD)")
    print(f"duplicates removed: {dup.removed_count} "
          f"({100.0 * dup.removed_fraction:.2f}%)")
    print(f"{'project':<16}{'comments':>10}{'satd':>8}{'% satd':>9}")
    for project, (total, satd) in sorted(stats.per_project_counts.items()):
        pct = 100.0 * satd / total if total else 0.0
        print(f"{project:<16}{total:>10}{satd:>8}{pct:>8.2f}%")
    return 0


# ---------------------------------------------------------------------------
# benchmark


def _merge_config(args, file_values: dict) -> dict:
    """Apply precedence: defaults < config file < explicit flags."""
    merged = {
        "protocol": "within",
        "techniques": "baseline,cost,smote,bline,adasyn,svmsmt",
        "models": "logistic,forest,boosting",
        "seed": 0,
        "folds": 10,
        "repeats": 10,
        "min_df": 1,
    }
    merged.update(file_values)
    for key in merged:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    merged["seed"] = int(merged["seed"])
    merged["folds"] = int(merged["folds"])
    merged["repeats"] = int(merged["repeats"])
    merged["min_df"] = int(merged["min_df"])
    return merged


def cmd_benchmark(args) -> int:
    file_values = read_config_file(args.config) if args.config else {}
    cfg = _merge_config(args, file_values)
    techniques = _csv_list(cfg["techniques"])
    models = _csv_list(cfg["models"])
    protocol = cfg["protocol"]
    for technique in techniques:
        if technique not in TECHNIQUES:
            raise ProtocolError(f"unknown technique {technique!r}; "
                                f"expected one of {TECHNIQUES}")
    for model in models:
        if model not in MODEL_KINDS:
            raise ProtocolError(f"unknown model kind {model!r}; "
                                f"expected one of {MODEL_KINDS}")
    if protocol not in PROTOCOLS:
        raise ProtocolError(f"unknown protocol {protocol!r}; "
                            f"expected one of {PROTOCOLS}")
    hyper = parse_hyper(args.hyper)

    corpus = read_corpus(args.corpus)
    runs = {}
    warnings = []
    for technique in techniques:
        for model in models:
            run = run_benchmark(corpus, technique, model, protocol,
                                seed=cfg["seed"], n_folds=cfg["folds"],
                                n_repeats=cfg["repeats"],
                                min_df=cfg["min_df"],
                                hyper=hyper.get(model))
            runs[(technique, model)] = run
            for error in run.errors:
                warnings.append(f"{technique}/{model} {error.fold_id}: "
                                f"{error.message}")

    config = {"command": "benchmark", **cfg}
    header = manifest_header(cfg["seed"], config)
    write_benchmark_outputs(runs, args.outdir, header_lines=header,
                            config=config)

    print(f"wrote benchmark tables to {args.outdir}")
    for metric in ("precision", "recall", "f1", "roc_auc"):
        print(f"\n{metric} ({protocol})")
        print(f"{'technique':<10}" + "".join(f"{m:>10}" for m in models))
        for technique in techniques:
            cells = "".join(
                f"{format_float(runs[(technique, m)].mean(metric)):>10}"
                for m in models)
            print(f"{technique:<10}{cells}")
    if warnings:
        print("\nwarnings (incomplete folds):")
        for line in warnings:
            print(f"  {line}")
    return 0


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    corpus = read_corpus(args.corpus)
    if args.projects:
        corpus = corpus.subset(_csv_list(args.projects))
    if len(corpus) == 0:
        raise ProtocolError("no records left to train on")
    if args.technique not in TECHNIQUES:
        raise ProtocolError(f"unknown technique {args.technique!r}; "
                            f"expected one of {TECHNIQUES}")
    hyper = parse_hyper(args.hyper)

    feat = TfidfFeaturizer(min_df=args.min_df)
    docs = [r.text for r in corpus]
    feat.fit(docs)
    vocab = feat.vocabulary_
    X = feat.transform(docs)
    y = np.asarray([r.label for r in corpus], dtype=np.int64)

    class_weight = None
    if args.technique == "cost":
        class_weight = compute_class_weights(y)
    elif args.technique in SAMPLERS:
        sampler = make_sampler(args.technique, random_state=args.seed)
        X, y = sampler.fit_resample(X, y)

    model = make_model(args.model, class_weight=class_weight,
                       random_state=args.seed,
                       hyper=hyper.get(args.model)).fit(X, y)

    vocab_path = args.vocab_out or args.out + ".vocab.tsv"
    config = {"command": "train", "technique": args.technique,
              "model": args.model, "seed": args.seed, "min_df": args.min_df}
    vocab.save(vocab_path,
               header_extra=f"tool=satdbench/{__version__} seed={args.seed} "
                            f"config={config_hash(config)}")
    trained = TrainedModel(args.model, model, vocab_sha=vocab.sha256(),
                           technique=args.technique)
    save_model(trained, args.out,
               meta={"tool": f"satdbench/{__version__}", "seed": args.seed,
                     "config": config_hash(config)})
    print(f"trained {args.model} ({args.technique}) on {len(corpus)} records; "
          f"vocabulary {len(vocab)} terms")
    print(f"model: {args.out}\nvocabulary: {vocab_path}")
    return 0


# ---------------------------------------------------------------------------
# predict


def _prepare_text(text: str) -> list[str]:
    return reduce_tokens(tokenize(normalize_text(text)))


def _score_texts(model: TrainedModel, vocab: Vocabulary,
                 texts: list[str]) -> np.ndarray:
    X = transform_docs([_prepare_text(t) for t in texts], vocab)
    return model.predict_scores(X)


def _predict_batch(model, vocab, lines, out) -> None:
    for line in lines:
        text = line.rstrip("\n")
        if not text.strip():
            out.write("ERROR\t\tempty input line\n")
            continue
        score = float(_score_texts(model, vocab, [text])[0])
        label = LABEL_NAMES[int(score >= 0.5)]
        out.write(f"{label}\t{score:.6f}\t{text}\n")
    out.flush()


def _serve_stream(model, vocab, lines, out) -> None:
    for line in lines:
        line = line.strip()
        try:
            request = json.loads(line) if line else None
            if not isinstance(request, dict) or "text" not in request:
                raise ValueError("request must be a JSON object with a "
                                 "'text' field")
            score = float(_score_texts(model, vocab,
                                       [str(request["text"])])[0])
            response = {"label": LABEL_NAMES[int(score >= 0.5)],
                        "score": score}
        except Exception as exc:
            response = {"error": str(exc)}
        out.write(json.dumps(response) + "\n")
        out.flush()


def cmd_predict(args) -> int:
    model = load_model(args.model)
    vocab_path = args.vocab or args.model + ".vocab.tsv"
    vocab = Vocabulary.load(vocab_path)
    if model.vocab_sha and model.vocab_sha != vocab.sha256():
        raise ModelFormatError(
            f"vocabulary {vocab_path} does not match the model's fitted "
            "vocabulary (hash mismatch)")

    if args.listen is not None:
        server = socket.create_server(("127.0.0.1", args.listen))
        port = server.getsockname()[1]
        print(f"listening on 127.0.0.1:{port}", flush=True)
        conn, _ = server.accept()
        with conn, conn.makefile("r", encoding="utf-8") as rfh, \
                conn.makefile("w", encoding="utf-8") as wfh:
            _serve_stream(model, vocab, rfh, wfh)
        server.close()
        return 0

    source = open(args.input, encoding="utf-8") if args.input else sys.stdin
    try:
        if args.serve:
            _serve_stream(model, vocab, source, sys.stdout)
        else:
            _predict_batch(model, vocab, source, sys.stdout)
    finally:
        if args.input:
            source.close()
    return 0


# ---------------------------------------------------------------------------
# explain


def cmd_explain(args) -> int:
    model = load_model(args.model)
    if model.kind != "logistic":
        print(f"error: explain supports the logistic model only, got "
              f"{model.kind!r}; train with --model logistic", file=sys.stderr)
        return 2
    vocab_path = args.vocab or args.model + ".vocab.tsv"
    vocab = Vocabulary.load(vocab_path)
    corpus = read_corpus(args.corpus)
    if args.projects:
        corpus = corpus.subset(_csv_list(args.projects))
    if len(corpus) == 0:
        raise ProtocolError("no records to explain")

    X = transform_docs([tokenize(r.text) for r in corpus], vocab)
    reference = (np.zeros(len(vocab)) if args.background == "zero"
                 else background_means(X))
    reports = linear_shap_batch(model.estimator, X, reference)
    stats = contribution_stats(reports, vocab)

    os.makedirs(args.outdir, exist_ok=True)
    config = {"command": "explain", "background": args.background,
              "top": args.top, "model": os.path.basename(args.model)}
    header = manifest_header("-", config)
    write_contributions_csv(stats, os.path.join(args.outdir, "contributions.csv"),
                            header_lines=header)

    top_terms = stats.top(args.top)
    with open(os.path.join(args.outdir, "top_terms.csv"), "w",
              encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("rank,term,mean_abs_attribution\n")
        for rank, term in enumerate(top_terms, start=1):
            j = vocab.term_index[term]
            fh.write(f"{rank},{term},{stats.mean_abs[j]!r}\n")

    print(f"contributing features: {len(stats.contributing)} / {len(vocab)}")
    for rank, term in enumerate(top_terms, start=1):
        print(f"{rank:>3}  {term}")

    if args.baseline_model:
        baseline = load_model(args.baseline_model)
        if baseline.kind != "logistic":
            print("error: baseline model must be logistic", file=sys.stderr)
            return 2
        base_reports = linear_shap_batch(baseline.estimator, X, reference)
        base_stats = contribution_stats(base_reports, vocab)
        new_terms, fraction = feature_diff(stats, base_stats)
        write_diff_csv(new_terms, model.technique or "technique",
                       os.path.join(args.outdir, "new_features.csv"),
                       header_lines=header)
        print(f"new contributing features vs baseline: {len(new_terms)} "
              f"({100.0 * fraction:.1f}%)")
    return 0


# ---------------------------------------------------------------------------
# dup-impact


def cmd_dup_impact(args) -> int:
    if not os.path.exists(args.input):
        print(f"error: input file not found: {args.input}", file=sys.stderr)
        return 2
    raw = load_corpus(args.input, strict_labels=not args.lax_labels)
    deduped, _ = preprocess(raw, PreprocessConfig(dedupe=True))
    with_dups, _ = preprocess(raw, PreprocessConfig(dedupe=False))
    protocols = tuple(_csv_list(args.protocols))
    for protocol in protocols:
        if protocol not in PROTOCOLS:
            raise ProtocolError(f"unknown protocol {protocol!r}")

    result = duplicate_impact_run(with_dups, deduped, args.technique,
                                  args.model, seed=args.seed,
                                  protocols=protocols, n_folds=args.folds,
                                  n_repeats=args.repeats)
    os.makedirs(args.outdir, exist_ok=True)
    config = {"command": "dup-impact", "technique": args.technique,
              "model": args.model, "seed": args.seed,
              "protocols": ",".join(protocols)}
    header = manifest_header(args.seed, config)
    path = os.path.join(args.outdir, "dup_impact.csv")
    with open(path, "w", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("protocol,project,f1_with_duplicates,f1_deduplicated,delta\n")
        for row in result.rows:
            fh.write(f"{row.protocol},{row.project},"
                     f"{format_float(row.f1_with_duplicates)},"
                     f"{format_float(row.f1_deduplicated)},"
                     f"{format_float(row.delta)}\n")
    for protocol in protocols:
        mean_with = result.mean_f1(protocol, "with")
        mean_dedup = result.mean_f1(protocol, "dedup")
        print(f"{protocol}: mean F1 with duplicates "
              f"{format_float(mean_with)}, deduplicated "
              f"{format_float(mean_dedup)}")
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satdbench",
        description="Detect self-admitted technical debt in code comments "
                    "and benchmark class-balancing techniques.")
    parser.add_argument("--version", action="version",
                        version=f"satdbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="clean and deduplicate a raw "
                                          "labeled-comment CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--no-dedupe", action="store_true",
                   help="keep duplicate comments (for the duplicate-impact "
                        "study)")
    p.add_argument("--min-chars", type=int, default=3)
    p.add_argument("--projects", help="comma-separated project filter")
    p.add_argument("--lax-labels", action="store_true",
                   help="map unrecognized classification tokens to SATD "
                        "instead of failing")
    p.add_argument("--stats-out", help="write the summary as JSON here")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("benchmark", help="run the technique x model grid "
                                         "under one protocol")
    p.add_argument("--corpus", required=True, help="cleaned corpus TSV")
    p.add_argument("--outdir", required=True)
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.add_argument("--techniques", help="comma-separated technique list")
    p.add_argument("--models", help="comma-separated model list")
    p.add_argument("--seed", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--min-df", dest="min_df", type=int)
    p.add_argument("--hyper", action="append",
                   help="hyperparameter override MODEL.KEY=VALUE (repeatable)")
    p.add_argument("--config", help="flat key=value config file; flags "
                                    "override file values")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("train", help="train one model on a cleaned corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--technique", required=True, choices=TECHNIQUES)
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--vocab-out", help="vocabulary path (default: "
                                       "<out>.vocab.tsv)")
    p.add_argument("--projects", help="train only on these projects")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-df", dest="min_df", type=int, default=1)
    p.add_argument("--hyper", action="append")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score comments with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", help="vocabulary path (default: "
                                   "<model>.vocab.tsv)")
    p.add_argument("--input", help="file with one comment per line "
                                   "(default: stdin)")
    p.add_argument("--serve", action="store_true",
                   help="newline-delimited JSON request/response mode")
    p.add_argument("--listen", type=int,
                   help="serve the JSON protocol on a single TCP connection "
                        "at this port (0 picks a free port)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("explain", help="feature attributions for a logistic "
                                       "model")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab")
    p.add_argument("--corpus", required=True)
    p.add_argument("--projects")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--background", choices=("means", "zero"),
                   default="means",
                   help="reference point: corpus feature means or the zero "
                        "vector")
    p.add_argument("--baseline-model",
                   help="second logistic model to diff against")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("dup-impact", help="compare scores with and without "
                                          "duplicate comments")
    p.add_argument("--input", required=True, help="raw labeled-comment CSV")
    p.add_argument("--technique", required=True, choices=TECHNIQUES)
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--outdir", required=True)
    p.add_argument("--protocols", default="within,cross")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--lax-labels", action="store_true")
    p.set_defaults(func=cmd_dup_impact)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SatdBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        return 1


if __name__ == "__main__":
    sys.exit(main())
