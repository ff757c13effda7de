"""Training objectives as (loss, dLoss/dLogits) pairs.

Every function accepts a single distribution (K,) with an int gold label,
or a batch (B, K) with a gold array; the return shapes follow the input
(scalar loss or (B,) losses; gradient shaped like the input).

The cost-sensitive term is ``sum_{j != gold} C(gold, j) * log p_j``. It is
negative and enters the objective with ``+lambda``, so minimizing the
total pushes probability mass off the costly wrong classes.
"""

from dataclasses import dataclass

import numpy as np

from confuse_forge.numerics import EPS

MODES = ("CE", "CS_POP", "CS_INS", "FOCAL", "HINGE")


class LossContractError(ValueError):
    pass


@dataclass
class LossConfig:
    mode: str = "CE"
    lam: float = 1.0
    gamma: float = 2.0
    margin: float = 1.0
    ins_cost_gradient: str = "flow"
    eps: float = EPS

    def __post_init__(self):
        self.mode = self.mode.upper()
        if self.mode not in MODES:
            raise LossContractError(f"loss mode must be one of {MODES}, got {self.mode!r}")
        if self.lam < 0:
            raise LossContractError(f"lambda must be >= 0, got {self.lam}")
        if self.gamma < 0:
            raise LossContractError(f"gamma must be >= 0, got {self.gamma}")
        if self.margin <= 0:
            raise LossContractError(f"margin must be > 0, got {self.margin}")
        if self.ins_cost_gradient not in ("frozen", "flow"):
            raise LossContractError(
                f"ins_cost_gradient must be 'frozen' or 'flow', got {self.ins_cost_gradient!r}")
        if not self.eps > 0:
            raise LossContractError("eps must be positive")


def _batch(dist, gold):
    p = np.asarray(dist, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    g = np.atleast_1d(np.asarray(gold, dtype=np.int64))
    if g.shape[0] != p.shape[0]:
        raise LossContractError(f"{g.shape[0]} gold labels for {p.shape[0]} rows")
    if g.size and (g.min() < 0 or g.max() >= p.shape[1]):
        raise IndexError(f"gold label out of range for K={p.shape[1]}")
    return p, g, single


def _onehot(g, k):
    out = np.zeros((g.size, k))
    out[np.arange(g.size), g] = 1.0
    return out


def _out(loss, grad, single):
    if single:
        return float(loss[0]), grad[0]
    return loss, grad


def ce_loss(dist, gold, eps=EPS):
    p, g, single = _batch(dist, gold)
    rows = np.arange(g.size)
    pg = p[rows, g]
    loss = -np.log(np.maximum(pg, eps))
    grad = p - _onehot(g, p.shape[1])
    # below the floor the loss is flat
    grad[pg < eps] = 0.0
    return _out(loss, grad, single)


def cs_regularizer(dist, gold, costs, eps=EPS):
    """Cost-weighted wrong-class log-likelihood and its logit gradient.

    ``costs`` is the cost row C(gold, .) (shape (K,) or (B, K)); the entry
    at the gold index is ignored. Costs are constants for differentiation.
    """
    p, g, single = _batch(dist, gold)
    c = np.array(np.broadcast_to(np.asarray(costs, dtype=np.float64), p.shape))
    if np.any(c < 0):
        raise LossContractError("costs must be non-negative")
    c[np.arange(g.size), g] = 0.0
    reg = (c * np.log(np.maximum(p, eps))).sum(axis=1)
    # d/dz_k sum_j c_j log p_j = c_k - p_k * sum_j c_j; floored terms are flat
    c_live = np.where(p >= eps, c, 0.0)
    grad = c_live - p * c_live.sum(axis=1, keepdims=True)
    return _out(reg, grad, single)


def instance_regularizer(dist, gold, mode="flow", eps=EPS):
    """Instance-level regularizer ``sum_{j != gold} p_j log p_j``.

    ``flow`` differentiates through the leading ``p_j`` (the regularizer is
    minimized as written); ``frozen`` treats it as a constant cost.
    """
    p, g, single = _batch(dist, gold)
    wrong = np.ones_like(p)
    wrong[np.arange(g.size), g] = 0.0
    logp = np.log(np.maximum(p, eps))
    reg = (wrong * p * logp).sum(axis=1)
    live = wrong * (p >= eps)
    if mode == "frozen":
        c = live * p
        grad = c - p * c.sum(axis=1, keepdims=True)
    elif mode == "flow":
        # below the floor p*log(eps) is linear in p
        a = wrong * np.where(p >= eps, logp + 1.0, logp)
        # d/dz_k sum_j p_j a_j with a_j = (log p_j + 1) on wrong classes
        grad = p * a - p * (p * a).sum(axis=1, keepdims=True)
    else:
        raise LossContractError(f"unknown instance cost gradient mode {mode!r}")
    return _out(reg, grad, single)


def cs_total(dist, gold, costs, lam, eps=EPS):
    ce, ce_grad = ce_loss(dist, gold, eps)
    reg, reg_grad = cs_regularizer(dist, gold, costs, eps)
    return ce + lam * reg, ce_grad + lam * reg_grad


def cs_instance_loss(dist, gold, config):
    ce, ce_grad = ce_loss(dist, gold, config.eps)
    reg, reg_grad = instance_regularizer(dist, gold, config.ins_cost_gradient, config.eps)
    return ce + config.lam * reg, ce_grad + config.lam * reg_grad


def focal_loss(dist, gold, gamma, eps=EPS):
    """``-(1 - p_gold)^gamma * log p_gold``, differentiated through the factor."""
    p, g, single = _batch(dist, gold)
    rows = np.arange(g.size)
    pg = p[rows, g]
    q = 1.0 - pg
    logp = np.log(np.maximum(pg, eps))
    mod = q ** gamma
    loss = -mod * logp
    # dL/dp_gold * p_gold = gamma * q^(gamma-1) * p * log p - q^gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        extra = np.where(q > 0, gamma * q ** (gamma - 1.0) * pg * logp, 0.0) if gamma != 0 else 0.0
    coef = extra - np.where(pg >= eps, mod, 0.0)
    grad = coef[:, None] * (_onehot(g, p.shape[1]) - p)
    return _out(loss, grad, single)


def hinge_loss(logits, gold, margin=1.0):
    """Single-violator multiclass hinge on raw logits.

    ``max(0, margin + max_{j != gold} z_j - z_gold)``; subgradient +1 at the
    strongest violator (lowest index on ties) and -1 at gold when active.
    """
    z, g, single = _batch(logits, gold)
    rows = np.arange(g.size)
    masked = z.copy()
    masked[rows, g] = -np.inf
    viol = masked.argmax(axis=1)
    loss = np.maximum(0.0, margin + masked[rows, viol] - z[rows, g])
    grad = np.zeros_like(z)
    active = loss > 0
    grad[rows[active], viol[active]] = 1.0
    grad[rows[active], g[active]] = -1.0
    return _out(loss, grad, single)


def compute_loss(logits, probs, gold, config, cost_rows=None):
    """Dispatch on ``config.mode`` for a batch; returns ``(losses[B], dlogits[B, K])``.

    ``cost_rows`` (B, K) is required for CS_POP: row b holds C(gold_b, .).
    """
    mode = config.mode
    if mode == "CE":
        return ce_loss(probs, gold, config.eps)
    if mode == "CS_POP":
        if cost_rows is None:
            raise LossContractError("CS_POP needs cost rows")
        return cs_total(probs, gold, cost_rows, config.lam, config.eps)
    if mode == "CS_INS":
        return cs_instance_loss(probs, gold, config)
    if mode == "FOCAL":
        return focal_loss(probs, gold, config.gamma, config.eps)
    return hinge_loss(logits, gold, config.margin)
