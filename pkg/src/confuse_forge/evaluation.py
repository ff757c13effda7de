"""Token-level scoring, confusion heatmaps and error-category breakdowns.

Scores are a token-level proxy for span scoring: with single-token
triggers the two coincide. Zero denominators are reported as 0.
"""

import csv
import io
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from confuse_forge.estimators import confusion_from_predictions


class EvaluationContractError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreTriple:
    precision: float
    recall: float
    f1: float

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ErrorBreakdown:
    """Error percentages over gold triggers (non-NIL gold positions)."""
    total_error: float
    trigger_nil: float
    sibling: float
    other: float

    def as_dict(self):
        return asdict(self)


def _pair(gold, pred):
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if gold.shape != pred.shape:
        raise EvaluationContractError(f"gold has {gold.size} labels, pred has {pred.size}")
    return gold, pred


def f1_from(precision, recall):
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def micro_scores(gold, pred):
    gold, pred = _pair(gold, pred)
    correct = int(np.sum((gold == pred) & (gold != 0)))
    n_pred = int(np.sum(pred != 0))
    n_gold = int(np.sum(gold != 0))
    p = correct / n_pred if n_pred else 0.0
    r = correct / n_gold if n_gold else 0.0
    return ScoreTriple(p, r, f1_from(p, r))


def error_breakdown(gold, pred, schema):
    gold, pred = _pair(gold, pred)
    trig = gold != 0
    n = int(trig.sum())
    if n == 0:
        raise EvaluationContractError("error breakdown needs at least one gold trigger")
    order = schema.coarse_types()
    coarse = np.array([-1] + [order.index(schema.coarse_id(i)) for i in range(1, len(schema))])
    g, p = gold[trig], pred[trig]
    wrong = g != p
    to_nil = int(np.sum(p == 0))
    sibling = int(np.sum(wrong & (p != 0) & (coarse[p] == coarse[g])))
    other = int(np.sum(wrong & (p != 0) & (coarse[p] != coarse[g])))
    # total is defined as the sum so the identity holds exactly
    a, b, c = 100.0 * to_nil / n, 100.0 * sibling / n, 100.0 * other / n
    return ErrorBreakdown(a + b + c, a, b, c)


@dataclass
class Heatmap:
    rows: list
    cols: list
    values: np.ndarray  # row-normalized percentages

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["gold"] + self.cols)
        for name, row in zip(self.rows, self.values):
            writer.writerow([name] + [f"{v:.1f}" for v in row])
        return buf.getvalue()

    def to_markdown(self):
        lines = ["| gold | " + " | ".join(self.cols) + " |",
                 "|---" * (len(self.cols) + 1) + "|"]
        for name, row in zip(self.rows, self.values):
            lines.append(f"| {name} | " + " | ".join(f"{v:.1f}" for v in row) + " |")
        return "\n".join(lines) + "\n"


def heatmap_from_confusion(confusion, schema, coarse):
    """Row-normalized percentage heatmap for one coarse type from a confusion matrix.

    Columns are the coarse type's sub-types, then NIL, then CC (every
    prediction of a sub-type under another coarse type, pooled).
    """
    if coarse not in schema.coarse_types():
        raise EvaluationContractError(f"unknown coarse type {coarse!r}")
    counts = np.asarray(confusion, dtype=np.float64)
    subs = schema.subtypes(coarse)
    others = [j for j in range(1, len(schema)) if j not in subs]
    short = [schema.labels[i].split(":", 1)[1] for i in subs]
    rows, values = [], []
    for i, name in zip(subs, short):
        total = counts[i].sum()
        if total == 0:
            warnings.warn(f"heatmap row {schema.labels[i]} has no gold instances; omitted",
                          RuntimeWarning, stacklevel=2)
            continue
        cells = [counts[i, j] for j in subs] + [counts[i, 0], counts[i, others].sum()]
        rows.append(name)
        values.append(100.0 * np.asarray(cells) / total)
    return Heatmap(rows, short + ["NIL", "CC"], np.asarray(values).reshape(len(rows), len(short) + 2))


def coarse_heatmap(gold, pred, schema, coarse):
    gold, pred = _pair(gold, pred)
    return heatmap_from_confusion(confusion_from_predictions(gold, pred, len(schema)), schema, coarse)


def format_delta(before, after):
    """Relative change in percent, e.g. ``(42.97, 38.84) -> '-9.6%'``."""
    if before == 0:
        return "+0.0%" if after == 0 else "n/a"
    delta = 100.0 * (after - before) / before
    text = f"{delta:+.1f}%"
    return "+0.0%" if text in ("-0.0%", "+0.0%") else text


def breakdown_markdown(base, runs, base_name="base"):
    """Error-breakdown table: base column, then one value and delta column per run.

    ``runs`` is a list of ``(name, ErrorBreakdown)``.
    """
    header = f"| Error Rate (%) | {base_name} |"
    sep = "|---|---:|"
    for name, _ in runs:
        header += f" {name} | Δ {name} |"
        sep += "---:|---:|"
    lines = [header, sep]
    fields = [("Total Error", "total_error"), ("- Trigger/NIL", "trigger_nil"),
              ("- Sibling Sub-types", "sibling"), ("- Other", "other")]
    for title, key in fields:
        b = getattr(base, key)
        line = f"| {title} | {b:.2f} |"
        for _, bd in runs:
            v = getattr(bd, key)
            line += f" {v:.2f} | {format_delta(b, v)} |"
        lines.append(line)
    return "\n".join(lines) + "\n"


def scores_markdown(rows):
    """Score table; ``rows`` is a list of ``(name, ScoreTriple)``; values in percent."""
    lines = ["| Model | P | R | F1 |", "|---|---:|---:|---:|"]
    for name, s in rows:
        lines.append(f"| {name} | {100 * s.precision:.2f} | {100 * s.recall:.2f} | {100 * s.f1:.2f} |")
    return "\n".join(lines) + "\n"
