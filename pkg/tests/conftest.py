import numpy as np
import pytest

from confuse_forge.data import LabelSchema
from confuse_forge.model import ModelParams


@pytest.fixture
def schema():
    return LabelSchema.from_coarse_map({
        "Contact": ["Meet", "Broadcast", "Correspondence"],
        "Transaction": ["Transfer-Money", "Transfer-Ownership", "Transaction"],
    })


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def random_params(rng, V=9, d=3, w=1, h=4, K=4, scale=0.8):
    width = (2 * w + 1) * d
    return ModelParams(
        rng.normal(0, scale, (V, d)),
        rng.normal(0, scale, (width, h)),
        rng.normal(0, scale, h),
        rng.normal(0, scale, (h, K)),
        rng.normal(0, scale, K),
    )


def random_simplex(rng, k, size=None):
    return rng.dirichlet(np.ones(k), size=size)


def compositions(units, parts):
    """All non-negative integer vectors of length ``parts`` summing to ``units``."""
    rows = np.zeros((1, 0), dtype=np.int64)
    for _ in range(parts - 1):
        room = units - rows.sum(axis=1) + 1
        rows = np.repeat(rows, room, axis=0)
        # 0..room-1 within each repeated group
        starts = np.repeat(np.cumsum(room) - room, room)
        nxt = np.arange(rows.shape[0]) - starts
        rows = np.hstack([rows, nxt[:, None]])
    return np.hstack([rows, units - rows.sum(axis=1, keepdims=True)])


def wrong_class_grid(units, n, step=0.01):
    """Every split of ``units * step`` probability over ``n`` classes on the grid."""
    return compositions(units, n) * step


def entropy_term(parts):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(parts > 0, parts * np.log(parts), 0.0).sum(axis=-1)


# 30-token hand-scored fixture: (gold, pred) using short names
_SHORT = {"N": "NIL", "M": "Contact:Meet", "B": "Contact:Broadcast", "C": "Contact:Correspondence",
          "TM": "Transaction:Transfer-Money", "TO": "Transaction:Transfer-Ownership",
          "T": "Transaction:Transaction"}
SCORED_PAIRS = [("N", "N")] * 12 + [
    ("N", "M"), ("N", "TM"),
    ("M", "M"), ("M", "M"), ("M", "N"), ("M", "B"),
    ("B", "B"), ("B", "N"), ("B", "TO"),
    ("C", "C"), ("C", "M"),
    ("TM", "TM"), ("TM", "TO"), ("TM", "N"),
    ("TO", "TO"),
    ("T", "T"), ("T", "C"),
    ("TO", "N"),
]
# enumerated by hand from the pairs above
SCORED_ORACLE = {
    "precision": 7 / 14, "recall": 7 / 16, "f1": 7 / 15,
    "breakdown": (100 * 9 / 16, 100 * 4 / 16, 100 * 3 / 16, 100 * 2 / 16),
    "heatmaps": {
        "Contact": (["Meet", "Broadcast", "Correspondence"],
                    [[2, 1, 0, 1, 0], [0, 1, 0, 1, 1], [1, 0, 1, 0, 0]]),
        "Transaction": (["Transfer-Money", "Transfer-Ownership", "Transaction"],
                        [[1, 1, 0, 1, 0], [0, 1, 0, 1, 0], [0, 0, 1, 0, 1]]),
    },
}


def scored_fixture(schema):
    gold = np.array([schema.id(_SHORT[g]) for g, _ in SCORED_PAIRS])
    pred = np.array([schema.id(_SHORT[p]) for _, p in SCORED_PAIRS])
    return gold, pred
