"""Numeric primitives shared by the model, losses and the test suites.

Everything here runs in float64. Random streams come from numpy's PCG64
bit generator, keyed by a seed and a named sub-stream so that e.g. the
shuffling order does not depend on how many draws initialization made.
"""

import math

import numpy as np

EPS = 1e-12

# Named sub-streams. The integer keys are part of the reproducibility
# contract: never renumber an existing entry.
_STREAMS = {
    "init": 0,
    "shuffle": 1,
    "sampling": 2,
    "generate": 3,
    "test": 4,
}


class InvalidInputError(ValueError):
    pass


class GradientEvaluationError(RuntimeError):
    pass


def make_rng(seed, stream="init"):
    """Return a PCG64-backed Generator for ``(seed, stream)``."""
    if seed < 0 or seed >= 2**64:
        raise InvalidInputError(f"seed must be an unsigned 64-bit integer, got {seed}")
    key = _STREAMS[stream] if isinstance(stream, str) else int(stream)
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(key,))
    return np.random.Generator(np.random.PCG64(seq))


def softmax(logits):
    """Max-shifted softmax over the last axis.

    Accepts a length-K vector or a (B, K) batch.
    """
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("softmax received non-finite logits")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def safe_log(p, eps=EPS):
    return np.log(np.maximum(p, eps))


def log_prob(dist, label, eps=EPS):
    dist = np.asarray(dist, dtype=np.float64)
    if not 0 <= label < dist.shape[-1]:
        raise IndexError(f"class {label} out of range for K={dist.shape[-1]}")
    return float(math.log(max(float(dist[label]), eps)))


def check_gradient(f, grad_f, point, step=1e-5):
    """Compare ``grad_f`` against central differences of ``f``.

    Returns the max over coordinates of
    ``|numeric - analytic| / max(1, |analytic|)``.
    """
    x = np.array(point, dtype=np.float64).ravel()
    analytic = np.asarray(grad_f(x.copy()), dtype=np.float64).ravel()
    if analytic.shape != x.shape:
        raise InvalidInputError(
            f"gradient has {analytic.size} entries for a {x.size}-dim point")
    worst = 0.0
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + step
        f_plus = float(f(x.copy()))
        x[i] = orig - step
        f_minus = float(f(x.copy()))
        x[i] = orig
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise GradientEvaluationError(f"non-finite f while probing coordinate {i}")
        numeric = (f_plus - f_minus) / (2.0 * step)
        err = abs(numeric - analytic[i]) / max(1.0, abs(analytic[i]))
        worst = max(worst, err)
    return worst
