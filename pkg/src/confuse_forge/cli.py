"""Command-line entry point: generate / train / evaluate / compare / report.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from confuse_forge.data import (CorpusParseError, LabelSchema, SchemaError, Vocabulary, as_arrays,
                                build_instances, read_tsv, write_tsv)
from confuse_forge.estimators import confusion_from_predictions, matrix_to_csv
from confuse_forge.evaluation import (ErrorBreakdown, ScoreTriple, breakdown_markdown,
                                      error_breakdown, heatmap_from_confusion, micro_scores,
                                      scores_markdown)
from confuse_forge.generator import ConfigError, GeneratorConfig, generate_splits, sidecar_json
from confuse_forge.losses import LossContractError
from confuse_forge.model import load_checkpoint, predict, save_checkpoint
from confuse_forge.training import TrainConfig, TrainContractError, train

TRAIN_FIELDS = {"corpus", "loss", "model", "epochs", "batch_size", "sampling", "sampling_ratio",
                "seed", "cost_source", "out"}


class UsageError(Exception):
    """Bad configuration or arguments; maps to exit code 2."""


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def config_hash(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()


def load_json(path, what="config"):
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"{what} file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


def write_manifest(out_dir, config_obj, seed, corpus_paths, artifacts, started):
    manifest = {
        "config_sha256": config_hash(config_obj),
        "config": config_obj,
        "seed": seed,
        "corpus": {k: str(v) for k, v in corpus_paths.items()},
        "corpus_sha256": {k: sha256_file(v) for k, v in corpus_paths.items()},
        "output_dir": str(out_dir),
        "artifacts": {name: sha256_file(Path(out_dir) / name) for name in sorted(artifacts)},
        # timestamps live only here so every other file is reproducible
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
    }
    (Path(out_dir) / "manifest.json").write_text(canonical_json(manifest), encoding="utf-8")
    return manifest


def verify_manifest(run_dir):
    """Return the artifact names whose checksum no longer matches."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    bad = []
    for name, digest in manifest["artifacts"].items():
        path = run_dir / name
        if not path.is_file() or sha256_file(path) != digest:
            bad.append(name)
    return bad


# generate -----------------------------------------------------------------

def cmd_generate(args):
    started = time.perf_counter()
    obj = load_json(args.config) if args.config else {}
    if args.seed is not None:
        obj["seed"] = args.seed
    obj.pop("labels", None)
    try:
        config = GeneratorConfig.from_json(obj)
    except TypeError as exc:
        raise UsageError(f"generator config: {exc}") from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits = generate_splits(config)
    artifacts = []
    for name, sentences in splits.items():
        write_tsv(out / f"{name}.tsv", sentences)
        artifacts.append(f"{name}.tsv")
    (out / "generator.json").write_text(sidecar_json(config), encoding="utf-8")
    artifacts.append("generator.json")
    write_manifest(out, config.to_json(), config.seed, {}, artifacts, started)
    print(f"wrote {', '.join(artifacts)} to {out}")
    return 0


# train --------------------------------------------------------------------

def resolve_train_config(args):
    obj = load_json(args.config)
    unknown = set(obj) - TRAIN_FIELDS
    if unknown:
        raise UsageError(f"{sorted(unknown)[0]}: unknown train config field")
    loss = dict(obj.get("loss", {}))
    if "lambda" in loss:
        loss["lam"] = loss.pop("lambda")
    if args.loss is not None:
        loss["mode"] = args.loss
    for flag, key in (("lam", "lam"), ("gamma", "gamma"), ("margin", "margin"),
                      ("ins_cost_gradient", "ins_cost_gradient")):
        if getattr(args, flag) is not None:
            loss[key] = getattr(args, flag)
    obj["loss"] = loss
    if args.seed is not None:
        obj["seed"] = args.seed
    if args.sampling_ratio is not None:
        obj["sampling"] = True
        obj["sampling_ratio"] = args.sampling_ratio
    if args.epochs is not None:
        obj["epochs"] = args.epochs
    if args.out is not None:
        obj["out"] = args.out
    if "out" not in obj:
        raise UsageError("out: no output directory (set 'out' or pass --out)")
    corpus = obj.get("corpus") or {}
    for key in ("train", "dev"):
        if key not in corpus:
            raise UsageError(f"corpus.{key}: missing corpus path")
    base = Path(args.config).resolve().parent
    paths = {}
    for key, value in corpus.items():
        p = Path(value)
        paths[key] = p if p.is_absolute() else (base / p)
    for key, p in paths.items():
        if not p.is_file():
            raise UsageError(f"corpus.{key}: file not found: {p}")
    try:
        tc = TrainConfig(**{k: v for k, v in obj.items() if k not in ("corpus", "out")})
    except (TypeError, ValueError, LossContractError) as exc:
        raise UsageError(str(exc)) from None
    return obj, tc, paths


def load_schema(paths, sentences_by_split):
    if "schema" in paths:
        obj = json.loads(paths["schema"].read_text(encoding="utf-8"))
        return LabelSchema(obj["labels"])
    labels = set()
    for sents in sentences_by_split.values():
        for s in sents:
            labels.update(s.labels)
    labels.discard("NIL")
    return LabelSchema(["NIL"] + sorted(labels))


def evaluation_record(method, gold, pred, schema, corpus_path):
    s = micro_scores(gold, pred)
    conf = confusion_from_predictions(gold, pred, len(schema))
    rec = {
        "method": method,
        "corpus_sha256": sha256_file(corpus_path),
        "labels": schema.labels,
        "scores": s.as_dict(),
        "confusion": conf.tolist(),
    }
    rec["breakdown"] = error_breakdown(gold, pred, schema).as_dict() if np.any(gold != 0) else None
    return rec


def cmd_train(args):
    started = time.perf_counter()
    obj, tc, paths = resolve_train_config(args)
    out = Path(obj["out"])
    sentences = {k: read_tsv(p) for k, p in paths.items() if k in ("train", "dev", "test")}
    schema = load_schema(paths, sentences)
    vocab = Vocabulary.from_sentences(sentences["train"])
    w = tc.model.w
    data = {k: as_arrays(build_instances(v, schema, vocab, w, k)) for k, v in sentences.items()}
    params, report = train(data["train"], data["dev"], tc, len(vocab), len(schema), progress=print)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.bin", params, tc.model, vocab, schema.labels)
    (out / "report.json").write_text(canonical_json(report.to_json()), encoding="utf-8")
    resolved = {"corpus": {k: str(v) for k, v in paths.items()}, **tc.to_json()}
    (out / "config.json").write_text(canonical_json(resolved), encoding="utf-8")
    artifacts = ["checkpoint.bin", "report.json", "config.json"]
    if "test" in data:
        gold = data["test"][1]
        pred = predict(params, data["test"][0])
        rec = evaluation_record(tc.method, gold, pred, schema, paths["test"])
        rec["seed"] = tc.seed
        (out / "test_eval.json").write_text(canonical_json(rec), encoding="utf-8")
        artifacts.append("test_eval.json")
        s = rec["scores"]
        print(f"test P {s['precision']:.4f} R {s['recall']:.4f} F1 {s['f1']:.4f}")
    write_manifest(out, resolved, tc.seed, paths, artifacts, started)
    print(f"best epoch {report.best_epoch} (dev F1 {report.best_dev_f1:.4f}); wrote {out}")
    return 0


# evaluate / report --------------------------------------------------------

def write_eval_reports(rec, out):
    """Confusion CSV, per-coarse heatmaps and Markdown tables for one evaluation."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    schema = LabelSchema(rec["labels"])
    conf = np.asarray(rec["confusion"], dtype=np.int64)
    written = []
    (out / "confusion.csv").write_text(matrix_to_csv(conf, schema.labels), encoding="utf-8")
    written.append("confusion.csv")
    md = [f"# {rec['method']}\n", scores_markdown([(rec["method"], ScoreTriple(**rec["scores"]))])]
    if rec.get("breakdown"):
        bd = ErrorBreakdown(**rec["breakdown"])
        md.append("\n" + breakdown_markdown(bd, [], base_name=rec["method"]))
    for coarse in schema.coarse_types():
        subs = schema.subtypes(coarse)
        if conf[subs].sum() == 0:
            continue
        hm = heatmap_from_confusion(conf, schema, coarse)
        name = f"heatmap_{coarse}.csv"
        (out / name).write_text(hm.to_csv(), encoding="utf-8")
        written.append(name)
        md.append(f"\n## {coarse}\n\n" + hm.to_markdown())
    (out / "summary.md").write_text("".join(md), encoding="utf-8")
    written.append("summary.md")
    return written


def cmd_evaluate(args):
    ckpt = Path(args.checkpoint)
    corpus = Path(args.corpus)
    for p in (ckpt, corpus):
        if not p.is_file():
            raise UsageError(f"file not found: {p}")
    params, header = load_checkpoint(ckpt)
    schema = LabelSchema(header["labels"])
    vocab = Vocabulary(header["vocab"][2:])
    w = header["model_config"]["w"]
    windows, gold = as_arrays(build_instances(read_tsv(corpus), schema, vocab, w, corpus.stem))
    pred = predict(params, windows)
    rec = evaluation_record(args.name or ckpt.parent.name, gold, pred, schema, corpus)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.json").write_text(canonical_json(rec), encoding="utf-8")
    write_eval_reports(rec, out)
    s = rec["scores"]
    print(f"P {s['precision']:.4f} R {s['recall']:.4f} F1 {s['f1']:.4f}")
    return 0


def cmd_report(args):
    run = Path(args.run)
    rec_path = run / "test_eval.json"
    if not rec_path.is_file():
        raise UsageError(f"{run}: no test_eval.json (train with a test corpus first)")
    rec = json.loads(rec_path.read_text(encoding="utf-8"))
    out = Path(args.out or run / "report")
    written = write_eval_reports(rec, out)
    report_path = run / "report.json"
    if report_path.is_file():
        rep = json.loads(report_path.read_text(encoding="utf-8"))
        lines = ["| epoch | train loss | dev P | dev R | dev F1 | costs used |",
                 "|---:|---:|---:|---:|---:|---|"]
        for e in rep["epochs"]:
            lines.append(f"| {e['epoch']} | {e['train_loss']:.5f} | {e['dev_precision']:.4f} | "
                         f"{e['dev_recall']:.4f} | {e['dev_f1']:.4f} | {e['cost_snapshot'] or '-'} |")
        lines.append(f"\nbest epoch: {rep['best_epoch']} (dev F1 {rep['best_dev_f1']:.4f})\n")
        (out / "training.md").write_text("\n".join(lines), encoding="utf-8")
        written.append("training.md")
    print(f"wrote {', '.join(written)} to {out}")
    return 0


# compare ------------------------------------------------------------------

def cmd_compare(args):
    if len(args.runs) < 2:
        raise UsageError("compare needs at least two run directories")
    recs = []
    for run in args.runs:
        path = Path(run) / "test_eval.json"
        if not path.is_file():
            raise UsageError(f"{run}: no test_eval.json")
        recs.append((Path(run).name, json.loads(path.read_text(encoding="utf-8"))))
    digests = {name: r["corpus_sha256"] for name, r in recs}
    if len(set(digests.values())) > 1:
        diff = "\n".join(f"  {name}: {d}" for name, d in digests.items())
        raise UsageError(f"runs were evaluated on different test corpora:\n{diff}")

    base_name = args.baseline or recs[0][0]
    base = [r for name, r in recs if name == base_name]
    if not base:
        raise UsageError(f"baseline {base_name!r} is not among the runs")
    base = base[0]

    rows = [(name, r["method"], r.get("seed"), ScoreTriple(**r["scores"])) for name, r in recs]
    md = ["# Comparison\n", "\n## Runs\n\n", "| Run | Method | Seed | P | R | F1 |\n",
          "|---|---|---:|---:|---:|---:|\n"]
    for name, method, seed, s in rows:
        md.append(f"| {name} | {method} | {seed if seed is not None else '-'} | "
                  f"{100 * s.precision:.2f} | {100 * s.recall:.2f} | {100 * s.f1:.2f} |\n")

    by_method = {}
    for _, method, _, s in rows:
        by_method.setdefault(method, []).append(s)
    md += ["\n## Per method\n\n", "| Method | n | mean P | mean R | mean F1 | min F1 | max F1 |\n",
           "|---|---:|---:|---:|---:|---:|---:|\n"]
    for method, ss in by_method.items():
        f1 = [s.f1 for s in ss]
        md.append(f"| {method} | {len(ss)} | {100 * np.mean([s.precision for s in ss]):.2f} | "
                  f"{100 * np.mean([s.recall for s in ss]):.2f} | {100 * np.mean(f1):.2f} | "
                  f"{100 * min(f1):.2f} | {100 * max(f1):.2f} |\n")

    if base.get("breakdown"):
        others = [(name, ErrorBreakdown(**r["breakdown"])) for name, r in recs
                  if name != base_name and r.get("breakdown")]
        md += ["\n## Error breakdown vs ", base_name, "\n\n",
               breakdown_markdown(ErrorBreakdown(**base["breakdown"]), others, base_name)]

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    md_path = out if out.suffix == ".md" else out.with_suffix(".md")
    md_path.write_text("".join(md), encoding="utf-8")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["run", "method", "seed", "precision", "recall", "f1",
                     "total_error", "trigger_nil", "sibling", "other"])
    for name, r in recs:
        bd = r.get("breakdown") or {}
        s = r["scores"]
        writer.writerow([name, r["method"], r.get("seed", ""), repr(s["precision"]), repr(s["recall"]),
                         repr(s["f1"])] + [repr(bd[k]) if k in bd else "" for k in
                                           ("total_error", "trigger_nil", "sibling", "other")])
    md_path.with_suffix(".csv").write_text(buf.getvalue(), encoding="utf-8")
    print(f"wrote {md_path} and {md_path.with_suffix('.csv')}")
    return 0


# entry point --------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="confuse-forge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic train/dev/test corpus")
    p.add_argument("--config", help="generator config JSON (defaults apply when omitted)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--loss", choices=["ce", "cs_pop", "cs_ins", "focal", "hinge"])
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--ins-cost-gradient", choices=["frozen", "flow"])
    p.add_argument("--sampling-ratio", type=float, help="enable NIL under-sampling with this ratio")
    p.add_argument("--epochs", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--name")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="tabulate several runs on the same test corpus")
    p.add_argument("runs", nargs="+")
    p.add_argument("--baseline", help="run directory name used as the breakdown baseline")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="render tables for a completed run")
    p.add_argument("--run", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, SchemaError, CorpusParseError, TrainContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
