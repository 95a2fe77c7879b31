import json
import os
import socket
import subprocess
import sys
import time

import pytest

from synth import make_raw_rows, write_raw_csv

from satdbench.cli import main, parse_hyper, read_config_file
from satdbench.corpus import read_corpus
from satdbench.exceptions import ProtocolError

HERE = os.path.dirname(os.path.abspath(__file__))
GOLDEN_MODEL = os.path.join(HERE, "data", "golden_model.json")
GOLDEN_SCORES = os.path.join(HERE, "data", "golden_scores.tsv")


@pytest.fixture(scope="module")
def small_raw_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "raw2.csv"
    write_raw_csv(make_raw_rows(n_projects=2, comments_per_project=150,
                                seed=11), path)
    return path


@pytest.fixture(scope="module")
def small_clean_tsv(small_raw_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "clean.tsv"
    assert main(["preprocess", "--input", str(small_raw_csv),
                 "--output", str(out)]) == 0
    return out


class TestPreprocessCommand:
    def test_summary_and_output(self, small_raw_csv, tmp_path, capsys):
        out = tmp_path / "clean.tsv"
        stats = tmp_path / "stats.json"
        code = main(["preprocess", "--input", str(small_raw_csv),
                     "--output", str(out), "--stats-out", str(stats)])
        assert code == 0
        printed = capsys.readouterr().out
        assert "duplicates removed" in printed
        corpus = read_corpus(out)
        assert len(corpus) > 0
        payload = json.loads(stats.read_text())
        assert payload["output_comments"] == len(corpus)
        assert 0 <= payload["duplicates_removed_pct"] <= 100

    def test_no_dedupe_keeps_more(self, small_raw_csv, tmp_path):
        with_dedupe = tmp_path / "a.tsv"
        without = tmp_path / "b.tsv"
        main(["preprocess", "--input", str(small_raw_csv),
              "--output", str(with_dedupe)])
        main(["preprocess", "--input", str(small_raw_csv),
              "--output", str(without), "--no-dedupe"])
        assert len(read_corpus(without)) > len(read_corpus(with_dedupe))

    def test_empty_file_exits_2(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("projectname,classification,commenttext\n")
        assert main(["preprocess", "--input", str(empty),
                     "--output", str(tmp_path / "out.tsv")]) == 2

    def test_missing_column_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("projectname,classification\nAnt,DESIGN\n")
        assert main(["preprocess", "--input", str(bad),
                     "--output", str(tmp_path / "out.tsv")]) == 2
        assert "commenttext" in capsys.readouterr().err

    def test_bad_row_diagnostic(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("projectname,classification,commenttext\n"
                       "Ant,DESIGN,ok\nAnt,MYSTERY,nope\n")
        assert main(["preprocess", "--input", str(bad),
                     "--output", str(tmp_path / "out.tsv")]) == 2
        assert "row 2" in capsys.readouterr().err

    def test_missing_input_exits_2(self, tmp_path):
        assert main(["preprocess", "--input", str(tmp_path / "nope.csv"),
                     "--output", str(tmp_path / "out.tsv")]) == 2


class TestBenchmarkCommand:
    def test_grid_and_determinism(self, small_clean_tsv, tmp_path):
        argv = ["benchmark", "--corpus", str(small_clean_tsv),
                "--protocol", "within", "--techniques", "baseline,smote",
                "--models", "logistic", "--seed", "3"]
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(argv + ["--outdir", str(out1)]) == 0
        assert main(argv + ["--outdir", str(out2)]) == 0
        for name in ("precision.csv", "recall.csv", "f1.csv", "roc_auc.csv",
                     "wilcoxon.csv", "manifest.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        table = (out1 / "recall.csv").read_text().splitlines()
        assert table[0].startswith("# satdbench")
        assert table[1] == "technique,logistic"
        assert table[2].startswith("baseline,")
        assert table[3].startswith("smote,")

    def test_config_file_with_flag_override(self, small_clean_tsv, tmp_path,
                                            capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("protocol=within\ntechniques=baseline\n"
                       "models=logistic\nseed=5\n")
        out = tmp_path / "out"
        code = main(["benchmark", "--corpus", str(small_clean_tsv),
                     "--config", str(cfg), "--techniques", "smote",
                     "--outdir", str(out)])
        assert code == 0
        table = (out / "recall.csv").read_text()
        assert "smote," in table and "baseline," not in table

    def test_unknown_technique_exits_2(self, small_clean_tsv, tmp_path):
        assert main(["benchmark", "--corpus", str(small_clean_tsv),
                     "--techniques", "rose", "--models", "logistic",
                     "--outdir", str(tmp_path / "o")]) == 2

    def test_bad_hyper_exits_2(self, small_clean_tsv, tmp_path):
        assert main(["benchmark", "--corpus", str(small_clean_tsv),
                     "--models", "logistic", "--hyper", "epochs=5",
                     "--outdir", str(tmp_path / "o")]) == 2

    def test_parse_hyper(self):
        hyper = parse_hyper(["forest.n_trees=25", "logistic.l2=0.01"])
        assert hyper == {"forest": {"n_trees": 25}, "logistic": {"l2": 0.01}}
        with pytest.raises(ProtocolError):
            parse_hyper(["cnn.depth=3"])

    def test_read_config_file(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("# comment\nseed=9\n\nprotocol=cross\n")
        assert read_config_file(cfg) == {"seed": "9", "protocol": "cross"}
        bad = tmp_path / "bad.cfg"
        bad.write_text("just a line\n")
        with pytest.raises(ProtocolError):
            read_config_file(bad)


@pytest.fixture(scope="module")
def trained_models(small_clean_tsv, tmp_path_factory):
    outdir = tmp_path_factory.mktemp("models")
    base = outdir / "base.json"
    smote = outdir / "smote.json"
    forest = outdir / "forest.json"
    common = ["train", "--corpus", str(small_clean_tsv), "--seed", "4",
              "--hyper", "logistic.epochs=500"]
    assert main(common + ["--technique", "baseline", "--model", "logistic",
                          "--out", str(base)]) == 0
    assert main(common + ["--technique", "smote", "--model", "logistic",
                          "--out", str(smote)]) == 0
    assert main(["train", "--corpus", str(small_clean_tsv), "--seed", "4",
                 "--technique", "baseline", "--model", "forest",
                 "--hyper", "forest.n_trees=5",
                 "--out", str(forest)]) == 0
    return {"base": base, "smote": smote, "forest": forest}


class TestTrainAndPredict:
    def test_train_writes_model_and_vocab(self, trained_models):
        model_path = trained_models["smote"]
        assert os.path.exists(model_path)
        assert os.path.exists(str(model_path) + ".vocab.tsv")

    def test_train_deterministic_bytes(self, small_clean_tsv, tmp_path):
        paths = [tmp_path / "m1.json", tmp_path / "m2.json"]
        for path in paths:
            assert main(["train", "--corpus", str(small_clean_tsv),
                         "--technique", "smote", "--model", "logistic",
                         "--seed", "9", "--out", str(path)]) == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()
        assert (tmp_path / "m1.json.vocab.tsv").read_bytes() == \
            (tmp_path / "m2.json.vocab.tsv").read_bytes()

    def test_batch_predict_line_contract(self, trained_models, tmp_path,
                                         capsys):
        batch = tmp_path / "batch.txt"
        batch.write_text("TODO fix this ugly hack later\n"
                         "\n"
                         "parse the input stream\n")
        code = main(["predict", "--model", str(trained_models["smote"]),
                     "--input", str(batch)])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 3
        first = lines[0].split("\t")
        assert first[0] in ("SATD", "NonSATD")
        assert 0.0 <= float(first[1]) <= 1.0
        assert first[2] == "TODO fix this ugly hack later"
        assert lines[1].startswith("ERROR\t")
        assert lines[2].split("\t")[2] == "parse the input stream"

    def test_golden_model_flags_satd(self, capsys, tmp_path):
        batch = tmp_path / "one.txt"
        batch.write_text("TODO fix this hack later\n")
        assert main(["predict", "--model", GOLDEN_MODEL,
                     "--input", str(batch)]) == 0
        label, score, _ = capsys.readouterr().out.strip().split("\t")
        assert label == "SATD"
        assert float(score) > 0.5

    def test_golden_scores_frozen(self):
        from satdbench.cli import _prepare_text
        from satdbench.features import Vocabulary, transform_docs
        from satdbench.models import load_model

        model = load_model(GOLDEN_MODEL)
        vocab = Vocabulary.load(GOLDEN_MODEL + ".vocab.tsv")
        with open(GOLDEN_SCORES, encoding="utf-8") as fh:
            for line in fh:
                comment, expected = line.rstrip("\n").split("\t")
                X = transform_docs([_prepare_text(comment)], vocab)
                got = float(model.predict_scores(X)[0])
                assert abs(got - float(expected)) <= 1e-12

    def test_vocab_hash_mismatch_exits_2(self, trained_models, tmp_path):
        assert main(["predict", "--model", str(trained_models["smote"]),
                     "--vocab", GOLDEN_MODEL + ".vocab.tsv",
                     "--input", os.devnull]) == 2

    def test_serve_mode_stdin(self, trained_models):
        requests = "\n".join([
            json.dumps({"text": "TODO fix this ugly hack later"}),
            "not json",
            json.dumps({"wrong": "field"}),
            json.dumps({"text": "parse the input stream"}),
        ]) + "\n"
        proc = subprocess.run(
            [sys.executable, "-m", "satdbench.cli", "predict",
             "--model", str(trained_models["smote"]), "--serve"],
            input=requests, capture_output=True, text=True, timeout=120)
        assert proc.returncode == 0
        lines = proc.stdout.splitlines()
        assert len(lines) == 4
        first = json.loads(lines[0])
        assert first["label"] in ("SATD", "NonSATD")
        assert 0.0 <= first["score"] <= 1.0
        assert "error" in json.loads(lines[1])
        assert "error" in json.loads(lines[2])
        assert "label" in json.loads(lines[3])

    def test_serve_mode_tcp(self, trained_models):
        proc = subprocess.Popen(
            [sys.executable, "-m", "satdbench.cli", "predict",
             "--model", str(trained_models["smote"]), "--listen", "0"],
            stdout=subprocess.PIPE, text=True)
        try:
            banner = proc.stdout.readline()
            port = int(banner.strip().rsplit(":", 1)[1])
            with socket.create_connection(("127.0.0.1", port), timeout=30) as sock:
                sock.sendall((json.dumps({"text": "todo hack"}) + "\n").encode())
                sock.shutdown(socket.SHUT_WR)
                data = sock.makefile().readline()
            response = json.loads(data)
            assert "label" in response and "score" in response
            assert proc.wait(timeout=60) == 0
        finally:
            if proc.poll() is None:
                proc.kill()

    def test_thousand_line_batch_order(self, trained_models, tmp_path,
                                       capsys):
        batch = tmp_path / "big.txt"
        lines = [f"comment number {i} todo" for i in range(1000)]
        batch.write_text("\n".join(lines) + "\n")
        assert main(["predict", "--model", str(trained_models["smote"]),
                     "--input", str(batch)]) == 0
        out_lines = capsys.readouterr().out.splitlines()
        assert len(out_lines) == 1000
        for i in (0, 499, 999):
            assert out_lines[i].split("\t")[2] == f"comment number {i} todo"


class TestExplainCommand:
    def test_outputs_and_diff(self, trained_models, small_clean_tsv,
                              tmp_path, capsys):
        out = tmp_path / "explain"
        code = main(["explain", "--model", str(trained_models["smote"]),
                     "--corpus", str(small_clean_tsv), "--top", "10",
                     "--baseline-model", str(trained_models["base"]),
                     "--outdir", str(out)])
        assert code == 0
        assert (out / "contributions.csv").exists()
        assert (out / "top_terms.csv").exists()
        assert (out / "new_features.csv").exists()
        top = (out / "top_terms.csv").read_text().splitlines()
        assert len([l for l in top if not l.startswith("#")]) <= 11
        printed = capsys.readouterr().out
        assert "contributing features" in printed

    def test_top_flag_row_count(self, trained_models, small_clean_tsv,
                                tmp_path):
        out = tmp_path / "explain3"
        assert main(["explain", "--model", str(trained_models["smote"]),
                     "--corpus", str(small_clean_tsv), "--top", "3",
                     "--outdir", str(out)]) == 0
        rows = [l for l in (out / "top_terms.csv").read_text().splitlines()
                if not l.startswith("#")][1:]
        assert len(rows) == 3

    def test_diff_against_self_is_empty(self, trained_models,
                                        small_clean_tsv, tmp_path):
        out = tmp_path / "selfdiff"
        assert main(["explain", "--model", str(trained_models["smote"]),
                     "--corpus", str(small_clean_tsv),
                     "--baseline-model", str(trained_models["smote"]),
                     "--outdir", str(out)]) == 0
        rows = [l for l in (out / "new_features.csv").read_text().splitlines()
                if not l.startswith("#")][1:]
        assert rows == []

    def test_non_logistic_model_exits_2(self, trained_models,
                                        small_clean_tsv, tmp_path, capsys):
        assert main(["explain", "--model", str(trained_models["forest"]),
                     "--corpus", str(small_clean_tsv),
                     "--outdir", str(tmp_path / "x")]) == 2
        assert "logistic" in capsys.readouterr().err


class TestDupImpactCommand:
    def test_table_written(self, small_raw_csv, tmp_path, capsys):
        out = tmp_path / "dup"
        code = main(["dup-impact", "--input", str(small_raw_csv),
                     "--technique", "baseline", "--model", "logistic",
                     "--outdir", str(out), "--protocols", "within",
                     "--seed", "2"])
        assert code == 0
        lines = (out / "dup_impact.csv").read_text().splitlines()
        header_idx = next(i for i, l in enumerate(lines)
                          if not l.startswith("#"))
        assert lines[header_idx] == ("protocol,project,f1_with_duplicates,"
                                     "f1_deduplicated,delta")
        assert len(lines) > header_idx + 1
        assert "mean F1 with duplicates" in capsys.readouterr().out


class TestExitCodes:
    def test_argparse_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["benchmark"])  # missing required flags
        assert exc.value.code == 2

    def test_unreadable_model_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        assert main(["predict", "--model", str(bad)]) == 2

    def test_inputs_never_mutated(self, small_raw_csv, tmp_path):
        before = open(small_raw_csv, "rb").read()
        main(["preprocess", "--input", str(small_raw_csv),
              "--output", str(tmp_path / "out.tsv")])
        assert open(small_raw_csv, "rb").read() == before
