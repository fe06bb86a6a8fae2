"""Cross-validated k tuning, held-out evaluation and selector benchmarks."""

from __future__ import annotations

import json
import logging
import platform
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, _rng, kfold_assign
from .knn import KnnConfig, distances_to, mode_with_tiebreak
from .selectors import STRATEGIES, get_selector

log = logging.getLogger(__name__)

# Latencies reported for the original FPGA/CPU builds (50% train split,
# optimal k).  Hardware-bound; carried as report metadata only.
REFERENCE_LATENCY_MS = {
    "cpu": {"oddeven": 1927200, "enumeration": 1209000, "merge": 150000, "bubble": 34811, "kmin": 32519},
    "fpga": {"oddeven": 297615, "enumeration": 281750, "merge": 6024, "bubble": 13.041, "kmin": 3.913},
}


def _predict_ks(train: Dataset, Q: np.ndarray, ks, selector: str, parallel: bool) -> dict:
    """Predictions for several k at once, sharing the distance computation."""
    select = get_selector(selector)
    preds = {k: np.empty(len(Q), dtype=np.int64) for k in ks}
    for i, q in enumerate(Q):
        d = distances_to(train.features, q)
        for k in ks:
            neighbors, _ = select(d, train.labels, k, parallel=parallel)
            preds[k][i] = mode_with_tiebreak(neighbors)
    return preds


@dataclass
class TuneResult:
    scores: dict
    best_k: int
    folds: int
    seed: int
    skipped: list = field(default_factory=list)
    stratified: bool = True

    def to_json(self) -> str:
        return json.dumps({
            "folds": self.folds,
            "seed": self.seed,
            "scores": {str(k): v for k, v in self.scores.items()},
            "best_k": self.best_k,
            "skipped": self.skipped,
            "stratified": self.stratified,
        }, sort_keys=False)


def best_of(scores: dict) -> int:
    """Highest score; ties go to the smaller k."""
    return min(scores, key=lambda k: (-scores[k], k))


def tune_k(data: Dataset, k_candidates, folds: int = 10, seed: int = 0,
           selector: str = "kmin", parallel: bool = True) -> TuneResult:
    """Mean k-fold CV accuracy for each candidate k.

    Candidates larger than the smallest training fold are skipped and listed
    in ``TuneResult.skipped``.
    """
    ks = list(dict.fromkeys(int(k) for k in k_candidates))
    if not ks:
        raise ValueError("k_candidates must not be empty")
    if any(k < 1 for k in ks):
        raise ValueError("every k candidate must be >= 1")
    assign = kfold_assign(data, folds, seed)
    min_train = min(len(data) - int(np.sum(assign.folds == f)) for f in range(folds))
    usable = [k for k in ks if k <= min_train]
    skipped = [k for k in ks if k > min_train]
    if not usable:
        raise ValueError(f"every k candidate exceeds the smallest training fold ({min_train})")
    correct = {k: [] for k in usable}
    for f in range(folds):
        tr, te = assign.train_test(f)
        train = data.subset(tr)
        preds = _predict_ks(train, data.features[te], usable, selector, parallel)
        truth = data.labels[te]
        for k in usable:
            correct[k].append(float(np.mean(preds[k] == truth)))
        log.debug("fold %d/%d done", f + 1, folds)
    scores = {k: float(statistics.fmean(correct[k])) for k in usable}
    return TuneResult(scores, best_of(scores), folds, seed, skipped, assign.stratified)


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # rows: true ordinal, columns: predicted ordinal
    macro_f1: float
    predictions: np.ndarray

    def to_dict(self, label_table=None) -> dict:
        out = {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "confusion": self.confusion.tolist(),
        }
        if label_table is not None:
            out["labels"] = [c.name for c in label_table]
        return out


def _macro_f1(cm: np.ndarray) -> float:
    tp = np.diag(cm).astype(float)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    present = (support + predicted) > 0
    denom = support + predicted
    f1 = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    return float(f1[present].mean()) if present.any() else 0.0


def evaluate(train: Dataset, test: Dataset, config: KnnConfig = KnnConfig()) -> EvalResult:
    if len(train) == 0 or len(test) == 0:
        raise ValueError("train and test must both be non-empty")
    if train.label_table != test.label_table:
        raise ValueError("train and test label tables differ")
    preds = _predict_ks(train, test.features, [config.k], config.selector, config.parallel)[config.k]
    n_cls = len(train.label_table)
    cm = np.zeros((n_cls, n_cls), dtype=np.int64)
    np.add.at(cm, (test.labels, preds), 1)
    acc = float(np.mean(preds == test.labels))
    return EvalResult(acc, cm, _macro_f1(cm), preds)


# ------------------------------------------------------------------ bench


def bench_input(n: int, seed: int, rep: int, n_labels: int = 5):
    """Uniform random distances in [0, 1) with random labels, one per (seed, n, rep)."""
    rng = _rng(seed, n, rep)
    return rng.random(n), rng.integers(0, n_labels, size=n)


def _agg(values) -> dict:
    # lower median keeps the aggregate an actually recorded value
    return {"min": min(values), "median": statistics.median_low(values), "max": max(values)}


@dataclass
class BenchCell:
    strategy: str
    n: int
    k: int
    runs: list  # SelectionStats per repetition

    def to_dict(self) -> dict:
        timed = self.runs[1:] if len(self.runs) >= 3 else self.runs
        return {
            "strategy": self.strategy,
            "n": self.n,
            "k": self.k,
            "comparisons": _agg([r.comparisons for r in self.runs]),
            "element_reads": _agg([r.element_reads for r in self.runs]),
            "element_writes": _agg([r.element_writes for r in self.runs]),
            "wall_nanos": _agg([r.wall_nanos for r in timed]),
        }


@dataclass
class BenchReport:
    seed: int
    reps: int
    host: str
    parallel: bool
    cells: list

    def cell(self, strategy: str, n: int, k: int) -> BenchCell:
        for c in self.cells:
            if (c.strategy, c.n, c.k) == (strategy, n, k):
                return c
        raise KeyError((strategy, n, k))

    def to_dict(self) -> dict:
        return {
            "meta": {
                "seed": self.seed,
                "reps": self.reps,
                "host": self.host,
                "execution": "parallel" if self.parallel else "sequential",
                "warmup_discarded": self.reps >= 3,
                "reference_latency_ms": REFERENCE_LATENCY_MS,
            },
            "cells": [c.to_dict() for c in self.cells],
        }

    def to_json(self, indent=None) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def host_description() -> str:
    return f"{platform.python_implementation()} {platform.python_version()} on {platform.machine()} {platform.system()}"


def bench_selectors(sizes, ks, reps: int = 3, seed: int = 0, strategies=STRATEGIES,
                    parallel: bool = True) -> BenchReport:
    """Run every (strategy, n, k) cell ``reps`` times on seeded random inputs.

    Repetition ``r`` of size ``n`` uses the same input for every strategy and
    k.  Cells are timed one at a time.
    """
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    sizes = list(sizes)
    ks = list(ks)
    if not sizes or not ks:
        raise ValueError("sizes and ks must be non-empty")
    strategies = list(strategies)
    for s in strategies:
        get_selector(s)
    if any(n < 1 for n in sizes) or any(k < 1 for k in ks):
        raise ValueError("sizes and ks must be positive")
    cells = []
    for n in sizes:
        inputs = [bench_input(n, seed, r) for r in range(reps)]
        for k in ks:
            for s in strategies:
                fn = get_selector(s)
                runs = []
                for d, lab in inputs:
                    t0 = time.perf_counter_ns()
                    _, stats = fn(d, lab, k, parallel=parallel)
                    stats.wall_nanos = time.perf_counter_ns() - t0
                    runs.append(stats)
                cells.append(BenchCell(s, n, k, runs))
                log.info("bench %s n=%d k=%d done", s, n, k)
    return BenchReport(seed, reps, host_description(), parallel, cells)
