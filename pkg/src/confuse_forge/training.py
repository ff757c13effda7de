"""Epoch/batch training loop with dev-based model selection."""

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from confuse_forge.data import as_arrays, undersample_mask
from confuse_forge.estimators import confusion_from_predictions, population_costs, snapshot_id
from confuse_forge.evaluation import micro_scores
from confuse_forge.losses import LossConfig, compute_loss
from confuse_forge.model import (ModelConfig, TrainingDivergence, backward_batch, forward_batch,
                                 init_params, make_optimizer, predict)
from confuse_forge.numerics import InvalidInputError, make_rng


class TrainContractError(ValueError):
    pass


@dataclass
class TrainConfig:
    loss: LossConfig = field(default_factory=LossConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    epochs: int = 30
    batch_size: int = 64
    sampling: bool = False
    sampling_ratio: float = 5.0
    seed: int = 0
    # statistics source for the population estimator: "dev" or "train"
    cost_source: str = "dev"

    def __post_init__(self):
        if isinstance(self.loss, dict):
            self.loss = LossConfig(**self.loss)
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        if self.epochs < 1 or self.batch_size < 1:
            raise TrainContractError("epochs and batch_size must be >= 1")
        if self.sampling_ratio <= 0:
            raise TrainContractError("sampling_ratio must be positive")
        if self.cost_source not in ("dev", "train"):
            raise TrainContractError(f"cost_source must be 'dev' or 'train', got {self.cost_source!r}")
        # one seed drives init, shuffling and sampling
        self.model.seed = self.seed

    @property
    def method(self):
        """Display name: the loss mode, or ``SAMPLING`` for CE with under-sampling."""
        if self.sampling:
            return "SAMPLING" if self.loss.mode == "CE" else f"{self.loss.mode}+SAMPLING"
        return self.loss.mode

    def to_json(self):
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_precision: float
    dev_recall: float
    dev_f1: float
    # content hash of the cost matrix used during this epoch, and of the one
    # produced at its end; None when no population costs are in play
    cost_snapshot: str = None
    next_cost_snapshot: str = None


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    best_dev_f1: float = 0.0
    wall_clock_seconds: float = 0.0

    def to_json(self, include_timing=False):
        obj = {
            "epochs": [asdict(e) for e in self.epochs],
            "best_epoch": self.best_epoch,
            "best_dev_f1": self.best_dev_f1,
        }
        if include_timing:
            obj["wall_clock_seconds"] = self.wall_clock_seconds
        return obj


def evaluate_epoch(params, windows, gold):
    """One dev pass: micro scores plus the confusion matrix behind them."""
    gold = np.asarray(gold, dtype=np.int64)
    if gold.size == 0:
        raise TrainContractError("dev set is empty")
    pred = predict(params, windows)
    return micro_scores(gold, pred), confusion_from_predictions(gold, pred, params.b2.shape[0])


def _arrays(data):
    if isinstance(data, tuple):
        return np.asarray(data[0], dtype=np.int64), np.asarray(data[1], dtype=np.int64)
    return as_arrays(data)


def train(train_set, dev_set, config, vocab_size, n_labels, progress=None):
    """Train and return ``(best_params, report)``.

    ``train_set``/``dev_set`` are lists of instances or ``(windows, gold)``
    array pairs. ``progress`` receives one line per epoch.
    """
    started = time.perf_counter()
    X, y = _arrays(train_set)
    Xd, yd = _arrays(dev_set)
    if y.size == 0:
        raise TrainContractError("training set is empty")
    if yd.size == 0:
        raise TrainContractError("dev set is empty")
    if X.shape[1] != 2 * config.model.w + 1:
        raise TrainContractError(f"windows have width {X.shape[1]}, model expects {2 * config.model.w + 1}")

    loss_cfg = config.loss
    params = init_params(config.model, vocab_size, n_labels)
    optimizer = make_optimizer(config.model, params)
    shuffle_rng = make_rng(config.seed, "shuffle")
    sampling_rng = make_rng(config.seed, "sampling")

    # costs are only consulted when they can move the objective
    use_costs = loss_cfg.mode == "CS_POP" and loss_cfg.lam > 0
    costs = np.zeros((n_labels, n_labels))

    report = TrainReport()
    best_params, best_f1 = None, -1.0
    for epoch in range(1, config.epochs + 1):
        order = np.arange(y.size)
        if config.sampling:
            order = order[undersample_mask(y, config.sampling_ratio, sampling_rng)]
        order = order[shuffle_rng.permutation(order.size)]
        used = snapshot_id(costs) if use_costs else None

        loss_sum = 0.0
        for b, start in enumerate(range(0, order.size, config.batch_size)):
            idx = order[start:start + config.batch_size]
            yb = y[idx]
            try:
                probs, cache = forward_batch(params, X[idx])
            except InvalidInputError as exc:
                raise TrainingDivergence(f"non-finite logits at epoch {epoch}, batch {b}") from exc
            rows = costs[yb] if loss_cfg.mode == "CS_POP" else None
            losses, dlogits = compute_loss(cache.logits, probs, yb, loss_cfg, rows)
            batch_loss = float(losses.sum())
            if not np.isfinite(batch_loss):
                raise TrainingDivergence(f"non-finite loss at epoch {epoch}, batch {b}")
            grads = backward_batch(params, cache, dlogits / idx.size)
            optimizer.step(params, grads)
            loss_sum += batch_loss

        scores, confusion = evaluate_epoch(params, Xd, yd)
        produced = None
        if use_costs:
            if config.cost_source == "train":
                confusion_src = confusion_from_predictions(y, predict(params, X), n_labels)
            else:
                confusion_src = confusion
            costs = population_costs(confusion_src)
            produced = snapshot_id(costs)

        rec = EpochRecord(epoch, loss_sum / order.size, scores.precision, scores.recall,
                          scores.f1, used, produced)
        report.epochs.append(rec)
        if scores.f1 > best_f1:
            best_f1 = scores.f1
            best_params = params.copy()
            report.best_epoch, report.best_dev_f1 = epoch, scores.f1
        if progress is not None:
            progress(f"epoch {epoch:3d}  loss {rec.train_loss:.5f}  dev P {scores.precision:.4f} "
                     f"R {scores.recall:.4f} F1 {scores.f1:.4f}")

    report.wall_clock_seconds = time.perf_counter() - started
    return best_params, report
