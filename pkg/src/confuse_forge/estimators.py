"""Confusion counting and the population-level cost estimator."""

import csv
import hashlib
import io

import numpy as np

from confuse_forge.model import predict


class EstimatorContractError(ValueError):
    pass


def confusion_from_predictions(gold, pred, n_labels):
    """``counts[i, j]`` = number of positions with gold ``i`` predicted ``j``."""
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if gold.shape != pred.shape:
        raise EstimatorContractError("gold and prediction lengths differ")
    counts = np.zeros((n_labels, n_labels), dtype=np.int64)
    np.add.at(counts, (gold, pred), 1)
    return counts


def accumulate_confusion(params, windows, gold):
    """Run the model over ``windows`` and count gold-vs-argmax pairs."""
    gold = np.asarray(gold, dtype=np.int64)
    if gold.size == 0:
        raise EstimatorContractError("cannot accumulate a confusion matrix over zero instances")
    pred = predict(params, windows)
    return confusion_from_predictions(gold, pred, params.b2.shape[0])


def population_costs(confusion):
    """Row-normalize a confusion matrix (diagonal included in the total).

    Rows with no observations become all-zero rows.
    """
    counts = np.asarray(confusion, dtype=np.float64)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
        raise EstimatorContractError(f"confusion matrix must be square, got {counts.shape}")
    if np.any(counts < 0):
        raise EstimatorContractError("confusion counts must be non-negative")
    totals = counts.sum(axis=1, keepdims=True)
    safe = np.where(totals > 0, totals, 1.0)
    return np.where(totals > 0, counts / safe, 0.0)


def snapshot_id(matrix):
    """Short content hash identifying a cost matrix."""
    arr = np.ascontiguousarray(matrix, dtype="<f8")
    h = hashlib.sha256(str(arr.shape).encode("ascii"))
    h.update(arr.tobytes())
    return h.hexdigest()[:16]


def refresh_policy(epoch, params, windows, gold, n_labels=None):
    """Cost matrix to train epoch ``epoch`` (1-based) with.

    Epoch 1 gets an all-zero matrix (pure cross-entropy warm start). For
    later epochs ``params`` must be the parameters at the end of epoch
    ``epoch - 1`` and the costs come from their confusion on the given
    (dev) instances.
    """
    if epoch < 1:
        raise EstimatorContractError(f"epochs are 1-based, got {epoch}")
    k = n_labels if n_labels is not None else params.b2.shape[0]
    if epoch == 1:
        return np.zeros((k, k))
    return population_costs(accumulate_confusion(params, windows, gold))


def matrix_to_csv(matrix, labels):
    """Long-format CSV: ``row,col,value`` with label names."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row", "col", "value"])
    m = np.asarray(matrix)
    for i, ri in enumerate(labels):
        for j, cj in enumerate(labels):
            v = m[i, j]
            writer.writerow([ri, cj, int(v) if np.issubdtype(m.dtype, np.integer) else repr(float(v))])
    return buf.getvalue()


def matrix_from_csv(text, labels):
    index = {label: i for i, label in enumerate(labels)}
    out = np.zeros((len(labels), len(labels)))
    rows = list(csv.reader(io.StringIO(text)))
    for row, col, value in rows[1:]:
        out[index[row], index[col]] = float(value)
    return out
