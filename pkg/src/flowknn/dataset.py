"""Labeled feature datasets, stratified splits, k-fold assignment and a
synthetic traffic generator.

All randomness comes from numpy's ``default_rng`` (PCG64, 64-bit state),
seeded with the caller's 64-bit seed, so every artifact is reproducible.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .flowfeat import FEATURE_NAMES, FeatureRecord, FeatureVector, write_feature_csv

N_FEATURES = len(FEATURE_NAMES)
SEED_MASK = (1 << 64) - 1


def _rng(seed: int, *salt: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & SEED_MASK, *salt])


@dataclass(frozen=True)
class ClassLabel:
    ordinal: int
    name: str


@dataclass(frozen=True)
class LabeledSample:
    features: FeatureVector
    label: ClassLabel


class Dataset:
    """Immutable feature matrix plus label ordinals and their label table.

    ``features`` is an ``(n, 6)`` float array and ``labels`` an ``(n,)``
    int array of ordinals; both are read-only.
    """

    def __init__(self, features, labels, label_table: Sequence[ClassLabel], ids=None):
        X = np.array(features, dtype=float).reshape(-1, N_FEATURES)
        y = np.array(labels, dtype=np.int64).reshape(-1)
        if len(X) != len(y):
            raise ValueError(f"{len(X)} feature rows but {len(y)} labels")
        table = tuple(sorted(label_table, key=lambda c: c.ordinal))
        if [c.ordinal for c in table] != list(range(len(table))):
            raise ValueError("label ordinals must be dense and start at 0")
        if len({c.name for c in table}) != len(table):
            raise ValueError("label names must be unique")
        if len(y) and (y.min() < 0 or y.max() >= len(table)):
            raise ValueError("sample label not present in label table")
        X.setflags(write=False)
        y.setflags(write=False)
        self.features = X
        self.labels = y
        self.label_table = table
        # (device_id, window_start) per row, carried through for CSV output
        self.ids = tuple(ids) if ids is not None else None

    def __len__(self) -> int:
        return len(self.labels)

    def __repr__(self) -> str:
        return f"Dataset(n={len(self)}, classes={len(self.label_table)})"

    def label(self, ordinal: int) -> ClassLabel:
        return self.label_table[ordinal]

    def ordinal_of(self, name: str) -> int:
        for c in self.label_table:
            if c.name == name:
                return c.ordinal
        raise KeyError(name)

    @property
    def samples(self) -> list[LabeledSample]:
        return [
            LabeledSample(FeatureVector.from_values(x), self.label_table[int(l)])
            for x, l in zip(self.features, self.labels)
        ]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        ids = [self.ids[i] for i in idx] if self.ids is not None else None
        return Dataset(self.features[idx], self.labels[idx], self.label_table, ids)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=len(self.label_table))

    @classmethod
    def from_samples(cls, samples: Sequence[LabeledSample], label_table=None) -> "Dataset":
        if label_table is None:
            label_table = sorted({s.label for s in samples}, key=lambda c: c.ordinal)
        return cls([s.features.as_tuple() for s in samples], [s.label.ordinal for s in samples], label_table)

    @classmethod
    def from_records(cls, records: Sequence[FeatureRecord], label_table=None) -> "Dataset":
        """Build from labeled feature-CSV records.  Without an explicit table,
        ordinals follow sorted label names."""
        names = [r.label for r in records]
        if any(n is None for n in names):
            raise ValueError("every record needs a label")
        if label_table is None:
            label_table = [ClassLabel(i, n) for i, n in enumerate(sorted(set(names)))]
        lookup = {c.name: c.ordinal for c in label_table}
        missing = sorted(set(names) - set(lookup))
        if missing:
            raise ValueError(f"labels not in label table: {', '.join(missing)}")
        return cls(
            [r.features.as_tuple() for r in records],
            [lookup[n] for n in names],
            label_table,
            ids=[(r.device_id, r.window_start) for r in records],
        )

    def write_csv(self, out) -> None:
        ids = self.ids or [(self.label_table[int(l)].name, 0.0) for l in self.labels]
        write_feature_csv(
            out,
            (
                (dev, start, FeatureVector.from_values(x), self.label_table[int(l)].name)
                for (dev, start), x, l in zip(ids, self.features, self.labels)
            ),
            with_label=True,
        )


def dump_label_table(table: Sequence[ClassLabel]) -> str:
    return json.dumps({"labels": [{"ordinal": c.ordinal, "name": c.name} for c in table]})


def load_label_table(text: str) -> list[ClassLabel]:
    doc = json.loads(text)
    return [ClassLabel(int(e["ordinal"]), str(e["name"])) for e in doc["labels"]]


# ------------------------------------------------------------------ splits


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def _train_count(fraction: float, class_count: int) -> int:
    # exact decimal arithmetic: floor(0.57 * 100) must be 57, not 56
    m = math.floor(Fraction(repr(fraction)) * class_count)
    if class_count >= 2:
        m = max(m, 1)
    return m


def split(data: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Stratified train/test split.

    Every sample gets a key drawn from the seed; within each class the
    ``floor(fraction * count)`` smallest keys (at least one when the class
    has two or more samples) go to train.  Both parts keep input order.
    """
    if len(data) == 0:
        raise ValueError("cannot split an empty dataset")
    keys = _rng(spec.seed).random(len(data))
    in_train = np.zeros(len(data), dtype=bool)
    for c in range(len(data.label_table)):
        members = np.flatnonzero(data.labels == c)
        if len(members) == 0:
            continue
        order = members[np.lexsort((members, keys[members]))]
        in_train[order[: _train_count(spec.train_fraction, len(members))]] = True
    return data.subset(np.flatnonzero(in_train)), data.subset(np.flatnonzero(~in_train))


@dataclass(frozen=True)
class FoldAssignment:
    folds: np.ndarray
    n_folds: int
    stratified: bool = True

    def train_test(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        return np.flatnonzero(self.folds != fold), np.flatnonzero(self.folds == fold)


def kfold_assign(data: Dataset, folds: int, seed: int = 0) -> FoldAssignment:
    """Assign each sample a fold in ``[0, folds)``.

    Classes are laid end to end (each shuffled by seed) and dealt round-robin,
    so fold sizes differ by at most one both overall and per class.  When a
    class has fewer than ``folds`` samples the whole dataset is shuffled and
    dealt instead, and the result is flagged non-stratified.
    """
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")
    n = len(data)
    if n < folds:
        raise ValueError(f"{n} samples cannot fill {folds} folds")
    keys = _rng(seed, 1).random(n)
    counts = data.class_counts()
    stratified = bool(np.all(counts[counts > 0] >= folds))
    if stratified:
        order = np.lexsort((np.arange(n), keys, data.labels))
    else:
        warnings.warn(
            f"a class has fewer than {folds} samples; falling back to unstratified folds",
            stacklevel=2,
        )
        order = np.lexsort((np.arange(n), keys))
    assignment = np.empty(n, dtype=np.int64)
    assignment[order] = np.arange(n) % folds
    assignment.setflags(write=False)
    return FoldAssignment(assignment, folds, stratified)


# --------------------------------------------------------------- generator

# Feature domain used by the generator: (low, high) per coordinate.
DOMAIN = np.array([
    (0.0, 1.0),       # icmp_pct
    (0.0, 1.0),       # tcp_pct
    (0.0, 1.0),       # udp_pct
    (0.0, 1.0),       # ip_diversity
    (1.0, 5000.0),    # packet_count
    (40.0, 1500.0),   # mean_packet_size
])
WIDTH = DOMAIN[:, 1] - DOMAIN[:, 0]
FLOOD_CLASS = "ddos-udp"
# Raw Manhattan distance is dominated by packet_count and mean_packet_size,
# so centers are kept apart along those two (domain-normalized) axes.
MIN_CENTER_GAP = 0.15


@dataclass(frozen=True)
class SynthConfig:
    classes: int = 5
    samples_per_class: int = 1000
    cluster_spread: float = 0.05
    seed: int = 0
    label_noise: float = 0.0  # fraction of samples relabeled to a random other class

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError(f"classes must be >= 2, got {self.classes}")
        if self.samples_per_class < 1:
            raise ValueError(f"samples_per_class must be >= 1, got {self.samples_per_class}")
        if not (self.cluster_spread >= 0 and math.isfinite(self.cluster_spread)):
            raise ValueError(f"cluster_spread must be a finite non-negative number, got {self.cluster_spread}")
        if not 0 <= self.label_noise < 1:
            raise ValueError(f"label_noise must be in [0, 1), got {self.label_noise}")


# Calibrated desk-scale corpus: 6 classes x 2000 samples, one flood class,
# 2% label noise so that larger k has something to smooth.
CALIBRATED = SynthConfig(classes=6, samples_per_class=2000, cluster_spread=0.04, seed=7, label_noise=0.02)


def _quantize(v: np.ndarray) -> np.ndarray:
    """Project one raw point into the valid feature domain and onto values
    that survive a 9-significant-digit CSV round trip unchanged."""
    v = np.clip(v, DOMAIN[:, 0], DOMAIN[:, 1])
    pct = [round(float(x), 9) for x in v[:3]]
    s = pct[0] + pct[1] + pct[2]
    if s > 1:
        pct = [round(x / s, 9) for x in pct]
    while pct[0] + pct[1] + pct[2] > 1:
        j = max(range(3), key=lambda i: pct[i])
        pct[j] = round(pct[j] - 1e-9, 9)
    count = int(round(float(v[4])))
    div = round(max(float(v[3]), 1 / count), 9)
    if div < 1 / count:
        div = round(math.ceil(1e9 / count) / 1e9, 9)
    size = float(f"{float(v[5]):.9g}")
    return np.array(pct + [div, count, size])


def _flood_center(rng: np.random.Generator) -> np.ndarray:
    # hping3-style UDP flood: near-total UDP, spoofed sources, many small packets
    return _quantize(np.array([
        rng.uniform(0.0, 0.01),
        rng.uniform(0.0, 0.01),
        rng.uniform(0.95, 0.98),
        rng.uniform(0.9, 1.0),
        rng.uniform(3500, 4800),
        rng.uniform(60, 120),
    ]))


def _benign_center(rng: np.random.Generator) -> np.ndarray:
    shares = rng.dirichlet(np.ones(4))  # icmp, tcp, udp, other
    return _quantize(np.array([
        shares[0], shares[1], shares[2],
        rng.uniform(0.01, 0.3),
        rng.uniform(10, 2500),
        rng.uniform(80, 1400),
    ]))


def class_centers(config: SynthConfig) -> np.ndarray:
    """Class centers (row ``c`` for ordinal ``c``); ordinal 0 is the flood class.

    Benign centers are redrawn until every pair differs by at least
    ``MIN_CENTER_GAP`` of the domain width in packet_count or in
    mean_packet_size.
    """
    rng = _rng(config.seed, 2)
    centers = [_flood_center(rng)]
    for _ in range(100_000):
        if len(centers) == config.classes:
            return np.array(centers)
        cand = _benign_center(rng)
        if all(np.abs((cand - c) / WIDTH)[4:].max() >= MIN_CENTER_GAP for c in centers):
            centers.append(cand)
    raise ValueError(f"cannot place {config.classes} separated class centers; use fewer classes")


def synth_label_table(classes: int) -> list[ClassLabel]:
    names = [FLOOD_CLASS] + [f"device-{i:02d}" for i in range(1, classes)]
    return [ClassLabel(i, n) for i, n in enumerate(names)]


def synth_generate(config: SynthConfig) -> Dataset:
    """Clustered labeled feature vectors, one cluster per class.

    Each sample is its class center plus uniform noise in
    ``[-spread, spread] * domain width`` per coordinate, projected back
    into the valid domain.  Rows are grouped by class; ``ids`` hold
    ``(class name, 20 * index within class)``.
    """
    centers = class_centers(config)
    table = synth_label_table(config.classes)
    rng = _rng(config.seed, 3)
    m = config.samples_per_class
    rows = []
    labels = []
    ids = []
    for c, center in enumerate(centers):
        noise = rng.uniform(-1.0, 1.0, size=(m, N_FEATURES)) * WIDTH * config.cluster_spread
        for i in range(m):
            rows.append(_quantize(center + noise[i]) if config.cluster_spread else center)
            labels.append(c)
            ids.append((table[c].name, 20.0 * i))
    labels = np.array(labels)
    if config.label_noise:
        flip = np.flatnonzero(rng.random(len(labels)) < config.label_noise)
        shift = rng.integers(1, config.classes, size=len(flip))
        labels[flip] = (labels[flip] + shift) % config.classes
    return Dataset(np.array(rows), labels, table, ids)
