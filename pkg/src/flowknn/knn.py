"""Manhattan-distance KNN over a :class:`Dataset` with a pluggable selector."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .dataset import ClassLabel, Dataset
from .selectors import STRATEGIES, NeighborSet, SelectionStats, get_selector


@dataclass(frozen=True)
class KnnConfig:
    k: int = 5
    selector: str = "kmin"
    # vectorized selector mode; same neighbours and counters as sequential
    parallel: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.selector not in STRATEGIES:
            raise ValueError(
                f"unknown selector {self.selector!r}; valid identifiers: {', '.join(STRATEGIES)}"
            )


@dataclass(frozen=True)
class Classification:
    label: ClassLabel
    neighbors: NeighborSet
    stats: SelectionStats


def manhattan(a, b) -> float:
    a = tuple(a)
    b = tuple(b)
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {len(a)} != {len(b)}")
    total = 0.0
    for x, y in zip(a, b):
        total += abs(float(x) - float(y))
    return total


def distances_to(X: np.ndarray, query) -> np.ndarray:
    """Manhattan distance from every row of ``X`` to ``query``.

    Coordinates are accumulated left to right, so each value is bit-identical
    to :func:`manhattan` on the same pair.
    """
    q = np.asarray(tuple(query), dtype=float)
    if X.ndim != 2 or X.shape[1] != q.shape[0]:
        raise ValueError(f"dimension mismatch: training rows have {X.shape[-1]}, query has {q.shape[0]}")
    out = np.abs(X[:, 0] - q[0])
    for j in range(1, q.shape[0]):
        out += np.abs(X[:, j] - q[j])
    return out


def mode_with_tiebreak(neighbors: NeighborSet) -> int:
    """Most frequent label ordinal; ties go to the smaller distance sum,
    then to the smaller ordinal."""
    if len(neighbors) == 0:
        raise ValueError("cannot take the mode of an empty neighbor set")
    dists = defaultdict(list)
    for d, lab in neighbors.entries:
        dists[lab].append(d)
    # fsum: order-independent, so every selector's slot order agrees
    return min(dists, key=lambda lab: (-len(dists[lab]), math.fsum(dists[lab]), lab))


def classify(train: Dataset, query, config: KnnConfig = KnnConfig()) -> Classification:
    if len(train) == 0:
        raise ValueError("training set is empty")
    d = distances_to(train.features, query)
    select = get_selector(config.selector)
    neighbors, stats = select(d, train.labels, config.k, parallel=config.parallel)
    return Classification(train.label(mode_with_tiebreak(neighbors)), neighbors, stats)


def predict(train: Dataset, queries, config: KnnConfig = KnnConfig()) -> np.ndarray:
    """Predicted label ordinals for each row of ``queries`` (array-like, n x 6)."""
    Q = np.asarray(queries, dtype=float).reshape(-1, train.features.shape[1])
    return np.array([classify(train, q, config).label.ordinal for q in Q], dtype=np.int64)
