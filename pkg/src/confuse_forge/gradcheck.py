"""Finite-difference verification of model + loss gradients."""

import numpy as np

from confuse_forge.losses import compute_loss, cs_regularizer, ce_loss
from confuse_forge.model import backward_batch, forward_batch
from confuse_forge.numerics import check_gradient


def composite_objective(params, windows, gold, loss_cfg, cost_rows=None):
    """Build ``(f, grad_f, point)`` for the batch-mean loss over flat parameters.

    For CS_INS in ``frozen`` mode the costs are the wrong-class
    probabilities at ``params``, held fixed while probing, which is the
    function whose gradient the frozen mode computes.
    """
    windows = np.atleast_2d(np.asarray(windows, dtype=np.int64))
    gold = np.atleast_1d(np.asarray(gold, dtype=np.int64))
    n = gold.size
    frozen = None
    if loss_cfg.mode == "CS_INS" and loss_cfg.ins_cost_gradient == "frozen":
        frozen, _ = forward_batch(params, windows)

    def loss_and_dlogits(p):
        probs, cache = forward_batch(p, windows)
        if frozen is not None:
            ce, ce_grad = ce_loss(probs, gold, loss_cfg.eps)
            reg, reg_grad = cs_regularizer(probs, gold, frozen, loss_cfg.eps)
            return ce + loss_cfg.lam * reg, ce_grad + loss_cfg.lam * reg_grad, cache
        losses, dlogits = compute_loss(cache.logits, probs, gold, loss_cfg, cost_rows)
        return losses, dlogits, cache

    def f(vec):
        losses, _, _ = loss_and_dlogits(params.unflatten(vec))
        return float(np.sum(losses)) / n

    def grad_f(vec):
        p = params.unflatten(vec)
        _, dlogits, cache = loss_and_dlogits(p)
        return backward_batch(p, cache, dlogits / n).flatten(p.E.shape[0])

    return f, grad_f, params.flatten()


def check_model_gradient(params, windows, gold, loss_cfg, cost_rows=None, step=1e-5):
    f, grad_f, point = composite_objective(params, windows, gold, loss_cfg, cost_rows)
    return check_gradient(f, grad_f, point, step)
