import json

import pytest

from confuse_forge.cli import main, verify_manifest

SMALL_GEN = {"n_lemmas": 8, "n_fillers": 40, "splits": {"train": 120, "dev": 40, "test": 40}, "seed": 4}


def write(path, obj):
    path.write_text(json.dumps(obj), encoding="utf-8")
    return str(path)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    cfg = write(root / "gen.json", SMALL_GEN)
    assert main(["generate", "--config", cfg, "--out", str(root / "data")]) == 0
    return root / "data"


def train_config(tmp_path, corpus, **extra):
    obj = {"corpus": {"train": str(corpus / "train.tsv"), "dev": str(corpus / "dev.tsv"),
                      "test": str(corpus / "test.tsv")},
           "model": {"d": 8, "h": 12, "lr": 0.01}, "epochs": 3, "batch_size": 32, "seed": 1}
    obj.update(extra)
    return write(tmp_path / "train.json", obj)


def run_train(tmp_path, corpus, out, *flags, **extra):
    cfg = train_config(tmp_path, corpus, **extra)
    assert main(["train", "--config", cfg, "--out", str(out), *flags]) == 0
    return out


class TestGenerate:
    def test_files_and_counts(self, corpus):
        for name, n in SMALL_GEN["splits"].items():
            text = (corpus / f"{name}.tsv").read_text(encoding="utf-8")
            assert text.count("\n\n") + (0 if text.endswith("\n\n") else 1) >= n - 1
        side = json.loads((corpus / "generator.json").read_text())
        assert side["labels"][0] == "NIL" and len(side["labels"]) == 7
        assert verify_manifest(corpus) == []

    def test_byte_identical(self, tmp_path, corpus):
        cfg = write(tmp_path / "gen.json", SMALL_GEN)
        assert main(["generate", "--config", cfg, "--out", str(tmp_path / "again")]) == 0
        for name in ("train.tsv", "dev.tsv", "test.tsv", "generator.json"):
            assert (tmp_path / "again" / name).read_bytes() == (corpus / name).read_bytes()

    def test_bad_distribution(self, tmp_path, capsys):
        cfg = write(tmp_path / "gen.json", {"lemma_template": {"primary": 0.4, "sibling": 0.2, "nil": 0.3}})
        assert main(["generate", "--config", cfg, "--out", str(tmp_path / "x")]) == 2
        err = capsys.readouterr().err
        assert "lemma_template" in err and "0.9" in err

    def test_unknown_field(self, tmp_path, capsys):
        cfg = write(tmp_path / "gen.json", {"n_lemma": 3})
        assert main(["generate", "--config", cfg, "--out", str(tmp_path / "x")]) == 2
        assert "n_lemma" in capsys.readouterr().err


class TestTrain:
    def test_missing_corpus(self, tmp_path, corpus, capsys):
        cfg = train_config(tmp_path, corpus)
        obj = json.loads(open(cfg).read())
        obj["corpus"]["dev"] = str(tmp_path / "nowhere.tsv")
        write(tmp_path / "train.json", obj)
        assert main(["train", "--config", cfg, "--out", str(tmp_path / "r")]) == 2
        assert "nowhere.tsv" in capsys.readouterr().err

    def test_lambda_zero_report_matches_ce(self, tmp_path, corpus):
        a = run_train(tmp_path, corpus, tmp_path / "ce", "--loss", "ce")
        b = run_train(tmp_path, corpus, tmp_path / "pop0", "--loss", "cs_pop", "--lambda", "0")
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
        assert (a / "checkpoint.bin").read_bytes() == (b / "checkpoint.bin").read_bytes()

    def test_rerun_byte_identical(self, tmp_path, corpus):
        a = run_train(tmp_path, corpus, tmp_path / "a", "--loss", "cs_ins")
        b = run_train(tmp_path, corpus, tmp_path / "b", "--loss", "cs_ins")
        for name in ("checkpoint.bin", "report.json", "config.json", "test_eval.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
        assert verify_manifest(a) == []

    def test_manifest_detects_tampering(self, tmp_path, corpus):
        run = run_train(tmp_path, corpus, tmp_path / "t")
        with open(run / "report.json", "a") as fh:
            fh.write(" ")
        assert verify_manifest(run) == ["report.json"]

    def test_bad_loss_value(self, tmp_path, corpus):
        cfg = train_config(tmp_path, corpus, loss={"mode": "CS_POP", "lambda": -1})
        assert main(["train", "--config", cfg, "--out", str(tmp_path / "r")]) == 2


class TestDownstream:
    def test_evaluate_and_report(self, tmp_path, corpus):
        run = run_train(tmp_path, corpus, tmp_path / "run")
        out = tmp_path / "ev"
        assert main(["evaluate", "--checkpoint", str(run / "checkpoint.bin"),
                     "--corpus", str(corpus / "test.tsv"), "--out", str(out)]) == 0
        ev = json.loads((out / "eval.json").read_text())
        test_eval = json.loads((run / "test_eval.json").read_text())
        assert ev["scores"] == test_eval["scores"]
        assert (out / "confusion.csv").is_file() and (out / "summary.md").is_file()
        assert main(["report", "--run", str(run)]) == 0
        assert (run / "report" / "training.md").is_file()

    def test_compare_identical_runs(self, tmp_path, corpus):
        a = run_train(tmp_path, corpus, tmp_path / "one")
        b = run_train(tmp_path, corpus, tmp_path / "two")
        out = tmp_path / "cmp.md"
        assert main(["compare", str(a), str(b), "--out", str(out)]) == 0
        text = out.read_text()
        deltas = [cell.strip() for line in text.splitlines() if line.startswith("| Total") or
                  line.startswith("| -") for cell in line.split("|")[4::2] if cell.strip()]
        assert deltas and set(deltas) == {"+0.0%"}
        assert "min F1" in text
        assert (tmp_path / "cmp.csv").is_file()

    def test_compare_refuses_other_corpus(self, tmp_path, corpus, capsys):
        a = run_train(tmp_path, corpus, tmp_path / "one")
        b = run_train(tmp_path, corpus, tmp_path / "two")
        rec = json.loads((b / "test_eval.json").read_text())
        rec["corpus_sha256"] = "0" * 64
        (b / "test_eval.json").write_text(json.dumps(rec))
        assert main(["compare", str(a), str(b), "--out", str(tmp_path / "c.md")]) == 2
        assert "0" * 64 in capsys.readouterr().err
