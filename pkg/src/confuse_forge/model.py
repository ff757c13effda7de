"""Window classifier: embed -> concat -> tanh -> linear -> softmax.

The loss modules only ever see logits/probabilities and hand back
dLoss/dLogits, so an alternative encoder only has to provide the same
``forward_batch``/``backward_batch`` pair.
"""

import hashlib
import json
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from confuse_forge.numerics import make_rng, softmax

BLOCKS = ("E", "W1", "b1", "W2", "b2")


class TrainingDivergence(FloatingPointError):
    pass


@dataclass
class ModelConfig:
    d: int = 50
    h: int = 100
    w: int = 2
    embed_scale: float = 0.01
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        for name in ("d", "h", "w"):
            if getattr(self, name) < 1:
                raise ValueError(f"model.{name} must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"model.optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")


@dataclass
class ModelParams:
    E: np.ndarray
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @property
    def window_size(self):
        return self.W1.shape[0] // self.E.shape[1]

    def blocks(self):
        return {name: getattr(self, name) for name in BLOCKS}

    def copy(self):
        return ModelParams(*(getattr(self, n).copy() for n in BLOCKS))

    def flatten(self):
        return np.concatenate([getattr(self, n).ravel() for n in BLOCKS])

    def unflatten(self, vec):
        out, pos = [], 0
        for n in BLOCKS:
            ref = getattr(self, n)
            out.append(np.asarray(vec[pos:pos + ref.size], dtype=np.float64).reshape(ref.shape).copy())
            pos += ref.size
        return ModelParams(*out)

    def equals(self, other):
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in BLOCKS)


@dataclass
class Gradients:
    """Parameter gradients; the embedding gradient is row-sparse."""
    E_ids: np.ndarray
    E_rows: np.ndarray
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def dense_E(self, vocab_size):
        out = np.zeros((vocab_size, self.E_rows.shape[1]))
        out[self.E_ids] = self.E_rows
        return out

    def flatten(self, vocab_size):
        return np.concatenate([self.dense_E(vocab_size).ravel(), self.W1.ravel(),
                               self.b1.ravel(), self.W2.ravel(), self.b2.ravel()])


def _glorot(rng, fan_in, fan_out):
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def init_params(config, vocab_size, n_labels):
    rng = make_rng(config.seed, "init")
    width = (2 * config.w + 1) * config.d
    E = rng.uniform(-config.embed_scale, config.embed_scale, size=(vocab_size, config.d))
    W1 = _glorot(rng, width, config.h)
    W2 = _glorot(rng, config.h, n_labels)
    return ModelParams(E, W1, np.zeros(config.h), W2, np.zeros(n_labels))


def zero_params(vocab_size, n_labels, d, h, w):
    width = (2 * w + 1) * d
    return ModelParams(np.zeros((vocab_size, d)), np.zeros((width, h)), np.zeros(h),
                       np.zeros((h, n_labels)), np.zeros(n_labels))


@dataclass
class Cache:
    windows: np.ndarray
    x: np.ndarray
    hidden: np.ndarray
    logits: np.ndarray


def forward_batch(params, windows):
    """Forward a (B, 2w+1) batch of token-id windows; returns ``(probs, cache)``."""
    windows = np.asarray(windows, dtype=np.int64)
    if windows.ndim != 2 or windows.shape[1] * params.E.shape[1] != params.W1.shape[0]:
        raise ValueError(f"window batch of shape {windows.shape} does not match the parameters")
    V = params.E.shape[0]
    if windows.size and (windows.min() < 0 or windows.max() >= V):
        raise IndexError(f"token id out of range for vocabulary of size {V}")
    x = params.E[windows].reshape(windows.shape[0], -1)
    hidden = np.tanh(x @ params.W1 + params.b1)
    logits = hidden @ params.W2 + params.b2
    return softmax(logits), Cache(windows, x, hidden, logits)


def forward(params, instance):
    """Single-instance forward; returns ``(probs[K], cache)``."""
    probs, cache = forward_batch(params, np.asarray([instance.window]))
    return probs[0], cache


def backward_batch(params, cache, dlogits):
    """Backpropagate ``dlogits`` (B, K); gradients are summed over the batch."""
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if dlogits.ndim == 1:
        dlogits = dlogits[None, :]
    if dlogits.shape != cache.logits.shape:
        raise ValueError(f"dLoss/dLogits shape {dlogits.shape} does not match logits {cache.logits.shape}")
    dW2 = cache.hidden.T @ dlogits
    db2 = dlogits.sum(axis=0)
    dpre = (dlogits @ params.W2.T) * (1.0 - cache.hidden ** 2)
    dW1 = cache.x.T @ dpre
    db1 = dpre.sum(axis=0)
    dx = (dpre @ params.W1.T).reshape(cache.windows.shape[0], cache.windows.shape[1], -1)
    ids, inverse = np.unique(cache.windows.ravel(), return_inverse=True)
    rows = np.zeros((ids.size, params.E.shape[1]))
    np.add.at(rows, inverse, dx.reshape(-1, params.E.shape[1]))
    return Gradients(ids, rows, dW1, db1, dW2, db2)


backward = backward_batch


def eval_threads():
    """Evaluation fan-out from ``CONFUSE_FORGE_THREADS`` (default 1)."""
    raw = os.environ.get("CONFUSE_FORGE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"CONFUSE_FORGE_THREADS must be an integer, got {raw!r}") from None


def predict(params, windows, chunk=4096, threads=None):
    """Argmax labels (ties to the lowest index) for a window array.

    Chunk boundaries do not depend on ``threads``, so the result is
    identical for any thread count.
    """
    windows = np.asarray(windows, dtype=np.int64)
    starts = range(0, windows.shape[0], chunk)

    def run(start):
        probs, _ = forward_batch(params, windows[start:start + chunk])
        return probs.argmax(axis=1)

    threads = eval_threads() if threads is None else threads
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    if not parts:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(parts).astype(np.int64)


class SGD:
    def __init__(self, lr=0.1):
        self.lr = lr
        self.t = 0

    def step(self, params, grads):
        _check_finite(grads)
        self.t += 1
        for name in ("W1", "b1", "W2", "b2"):
            getattr(params, name)[...] -= self.lr * getattr(grads, name)
        params.E[grads.E_ids] -= self.lr * grads.E_rows
        return params


class Adam:
    """Adam with bias correction; moments kept dense for every block."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {n: np.zeros_like(a) for n, a in params.blocks().items()}
        self.v = {n: np.zeros_like(a) for n, a in params.blocks().items()}

    def step(self, params, grads):
        _check_finite(grads)
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name in BLOCKS:
            if name == "E":
                g = grads.dense_E(params.E.shape[0])
            else:
                g = getattr(grads, name)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            getattr(params, name)[...] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


def make_optimizer(config, params):
    if config.optimizer == "sgd":
        return SGD(config.lr)
    return Adam(params, config.lr, config.beta1, config.beta2, config.adam_eps)


def apply_update(params, grads, optimizer):
    """Apply one optimizer step in place and return ``params``."""
    return optimizer.step(params, grads)


def _check_finite(grads):
    for name in ("E_rows", "W1", "b1", "W2", "b2"):
        if not np.all(np.isfinite(getattr(grads, name))):
            block = "E" if name == "E_rows" else name
            raise TrainingDivergence(f"non-finite gradient in parameter block {block}")


# Checkpoint layout (little-endian):
#   8 bytes  magic b"CFCKPT01"
#   8 bytes  uint64 header length N
#   N bytes  UTF-8 JSON header: model config, vocabulary, vocab sha256,
#            labels, and for each block its name, shape and byte offset
#   payload  raw float64 blocks in header order
MAGIC = b"CFCKPT01"


def save_checkpoint(path, params, config, vocab, labels):
    blocks, offset = [], 0
    for name in BLOCKS:
        arr = getattr(params, name)
        blocks.append({"name": name, "shape": list(arr.shape), "dtype": "<f8", "offset": offset})
        offset += arr.size * 8
    header = {
        "format": "confuse-forge checkpoint",
        "version": 1,
        "model_config": asdict(config),
        "vocab_sha256": vocab.digest(),
        "vocab": list(vocab.tokens),
        "labels": list(labels),
        "blocks": blocks,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for name in BLOCKS:
            fh.write(np.ascontiguousarray(getattr(params, name), dtype="<f8").tobytes())


def load_checkpoint(path):
    """Return ``(params, header)``; raises ValueError on a corrupt file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (n,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + n].decode("utf-8"))
    payload = raw[16 + n:]
    arrays = []
    for spec in header["blocks"]:
        size = int(np.prod(spec["shape"])) if spec["shape"] else 1
        buf = payload[spec["offset"]:spec["offset"] + 8 * size]
        arrays.append(np.frombuffer(buf, dtype="<f8").reshape(spec["shape"]).astype(np.float64))
    digest = hashlib.sha256("".join(t + "\n" for t in header["vocab"]).encode("utf-8")).hexdigest()
    if digest != header["vocab_sha256"]:
        raise ValueError(f"{path}: vocabulary hash mismatch")
    return ModelParams(*arrays), header
