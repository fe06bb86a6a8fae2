"""k-smallest selection strategies with exact operation counters.

Five interchangeable selectors pick the ``k`` nearest (distance, label) pairs
out of a full distance list:

    kmin         single pass over the input, k candidate slots
    bubble       k min-bubbling passes (partial bubble sort)
    merge        full stable bottom-up merge sort
    oddeven      full odd-even transposition sort, exactly n phases
    enumeration  full stable rank sort, each element compared with every other

Counter model (identical for every selector, so counts are comparable):

* ``comparisons``    one per distance-vs-distance order test.
* ``element_reads``  two per comparison (both operands are loaded), plus two
                     per element move (its distance and its label).
* ``element_writes`` two per element move (one distance store, one label
                     store).  A swap is two moves: 4 reads, 4 writes.

Every selector except merge also has a data-parallel mode
(``parallel=True``) that vectorizes the independent work of a phase, a
bubble, a rank block or a run of non-replacing K-Min probes with numpy.  It
returns the same neighbours in the same slot order and the same counters as
the sequential reference.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

INF = math.inf

STRATEGIES = ("kmin", "bubble", "merge", "oddeven", "enumeration")


@dataclass
class SelectionStats:
    comparisons: int = 0
    element_reads: int = 0
    element_writes: int = 0
    wall_nanos: int = 0

    def counters(self) -> dict:
        return {
            "comparisons": self.comparisons,
            "element_reads": self.element_reads,
            "element_writes": self.element_writes,
        }


@dataclass(frozen=True)
class NeighborSet:
    """Up to ``k`` (distance, label ordinal) pairs, in selector slot order."""

    entries: tuple
    k: int

    @property
    def distances(self) -> list:
        return [d for d, _ in self.entries]

    @property
    def labels(self) -> list:
        return [lab for _, lab in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def _check(distances, labels, k):
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(distances) != len(labels):
        raise ValueError(
            f"distances and labels differ in length ({len(distances)} != {len(labels)})"
        )
    if len(distances) < 1:
        raise ValueError("selector input must hold at least one element")


def _plain(x):
    return x.item() if isinstance(x, np.generic) else x


def _result(d, lab, k, stats, n=None) -> tuple[NeighborSet, SelectionStats]:
    m = min(k, len(d) if n is None else n)
    entries = tuple((float(d[i]), _plain(lab[i])) for i in range(m))
    return NeighborSet(entries, k), stats


# ---------------------------------------------------------------- K-Min


def kmin_select(distances, labels, k, parallel=False):
    """Single-pass K-Min selection.

    Keeps ``k`` slots initialised to +inf.  Each incoming distance is tested
    once against the cached maximum slot and stored there only when strictly
    smaller; after a store the maximum slot is rescanned with ``k - 1``
    comparisons (first maximum wins).  The first ``min(k, n)`` inputs always
    land in slots ``0, 1, ...`` in order, so no sentinel survives in the
    output.
    """
    _check(distances, labels, k)
    if parallel:
        return _kmin_parallel(np.asarray(distances, dtype=float), np.asarray(labels), k)
    stats = SelectionStats()
    slot_d = [INF] * k
    slot_l = [-1] * k
    mx = 0
    for dist, lab in zip(distances, labels):
        stats.comparisons += 1
        stats.element_reads += 2
        if dist < slot_d[mx]:
            slot_d[mx] = dist
            slot_l[mx] = lab
            stats.element_reads += 2
            stats.element_writes += 2
            mx = 0
            for j in range(1, k):
                stats.comparisons += 1
                stats.element_reads += 2
                if slot_d[j] > slot_d[mx]:
                    mx = j
    return _result(slot_d, slot_l, k, stats, n=len(distances))


def _kmin_parallel(d: np.ndarray, lab: np.ndarray, k: int):
    # Probes between two replacements all test against the same cached
    # maximum, so a run of them is one vectorized search.
    n = len(d)
    stats = SelectionStats()
    slot_d = [INF] * k
    slot_l = [-1] * k
    mx = 0
    pos = 0
    chunk = 256
    while pos < n:
        bound = slot_d[mx]
        stop = min(n, pos + chunk)
        hits = np.flatnonzero(d[pos:stop] < bound)
        if hits.size == 0:
            stats.comparisons += stop - pos
            pos = stop
            chunk = min(chunk * 4, 1 << 20)
            continue
        p = pos + int(hits[0])
        stats.comparisons += p - pos + 1
        slot_d[mx] = float(d[p])
        slot_l[mx] = lab[p]
        stats.element_reads += 2
        stats.element_writes += 2
        mx = 0
        for j in range(1, k):
            if slot_d[j] > slot_d[mx]:
                mx = j
        stats.comparisons += k - 1
        pos = p + 1
    # every comparison loads two operands
    stats.element_reads += 2 * stats.comparisons
    return _result(slot_d, slot_l, k, stats, n=n)


# ---------------------------------------------------------------- Bubble


def bubble_select(distances, labels, k, parallel=False):
    """Partial bubble sort: ``min(k, n)`` passes, each bubbling the smallest
    remaining element from the back of the array to position ``i``.

    Pass ``i`` compares pairs ``(j-1, j)`` for ``j = n-1 .. i+1`` and swaps
    on strict ``>``, so the comparison count is ``sum(n-1-i)`` over passes.
    """
    _check(distances, labels, k)
    if parallel:
        return _bubble_parallel(np.array(distances, dtype=float), np.array(labels), k)
    d = list(distances)
    lab = list(labels)
    n = len(d)
    stats = SelectionStats()
    for i in range(min(k, n)):
        for j in range(n - 1, i, -1):
            stats.comparisons += 1
            stats.element_reads += 2
            if d[j - 1] > d[j]:
                d[j - 1], d[j] = d[j], d[j - 1]
                lab[j - 1], lab[j] = lab[j], lab[j - 1]
                stats.element_reads += 4
                stats.element_writes += 4
    return _result(d, lab, k, stats)


def _bubble_parallel(d: np.ndarray, lab: np.ndarray, k: int):
    n = len(d)
    stats = SelectionStats()
    for i in range(min(k, n)):
        a = d[i:]
        b = lab[i:]
        m = len(a)
        stats.comparisons += m - 1
        if m < 2:
            continue
        # The element carried leftward past position j is the leftmost
        # minimum of a[j:]; position j keeps it iff a[j] <= min(a[j+1:]).
        suffix = np.minimum.accumulate(a[::-1])[::-1]
        nxt = np.empty(m)
        nxt[:-1] = suffix[1:]
        nxt[-1] = INF
        keeps = a <= nxt
        idx = np.arange(m)
        carry = np.minimum.accumulate(np.where(keeps, idx, m)[::-1])[::-1]
        swapped = carry[:-1] != idx[:-1]  # swap at pair (j, j+1)
        n_swaps = int(swapped.sum())
        stats.element_reads += 4 * n_swaps
        stats.element_writes += 4 * n_swaps
        src = np.empty(m, dtype=np.int64)
        src[0] = carry[0]
        src[1:] = np.where(swapped, idx[:-1], carry[1:])
        d[i:] = a[src]
        lab[i:] = b[src]
    stats.element_reads += 2 * stats.comparisons
    return _result(d, lab, k, stats)


# ---------------------------------------------------------------- Merge


def merge_select(distances, labels, k, parallel=False):
    """Full stable bottom-up merge sort, then the first ``k`` slots.

    Runs of width 1, 2, 4, ... are merged from one buffer into the other;
    every pass moves all ``n`` elements.  Ties take the left run first.
    ``parallel`` is accepted for interface symmetry and ignored.
    """
    _check(distances, labels, k)
    src_d = list(distances)
    src_l = list(labels)
    n = len(src_d)
    dst_d = [0.0] * n
    dst_l = [0] * n
    stats = SelectionStats()
    comparisons = 0
    moves = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, out = lo, mid, lo
            while i < mid and j < hi:
                comparisons += 1
                if src_d[j] < src_d[i]:
                    dst_d[out] = src_d[j]
                    dst_l[out] = src_l[j]
                    j += 1
                else:
                    dst_d[out] = src_d[i]
                    dst_l[out] = src_l[i]
                    i += 1
                out += 1
            while i < mid:
                dst_d[out] = src_d[i]
                dst_l[out] = src_l[i]
                i += 1
                out += 1
            while j < hi:
                dst_d[out] = src_d[j]
                dst_l[out] = src_l[j]
                j += 1
                out += 1
            moves += hi - lo
        src_d, dst_d = dst_d, src_d
        src_l, dst_l = dst_l, src_l
        width *= 2
    stats.comparisons = comparisons
    stats.element_reads = 2 * comparisons + 2 * moves
    stats.element_writes = 2 * moves
    return _result(src_d, src_l, k, stats)


# ---------------------------------------------------------------- Odd-even


def oddeven_phase_pairs(n: int, phase: int) -> int:
    """Number of compared pairs in one odd-even phase over ``n`` elements."""
    return n // 2 if phase % 2 == 0 else (n - 1) // 2


def oddeven_comparisons(n: int) -> int:
    """Closed form of the odd-even comparison count over exactly n phases.

    Phases 0, 2, 4, ... (``ceil(n/2)`` of them) compare ``floor(n/2)`` pairs;
    phases 1, 3, ... (``floor(n/2)`` of them) compare ``floor((n-1)/2)``.
    """
    return ((n + 1) // 2) * (n // 2) + (n // 2) * ((n - 1) // 2)


def oddeven_select(distances, labels, k, parallel=False):
    """Odd-even transposition sort run for exactly ``n`` phases (enough to
    sort any input), then the first ``k`` slots.  Swaps on strict ``>``."""
    _check(distances, labels, k)
    if parallel:
        return _oddeven_parallel(np.array(distances, dtype=float), np.array(labels), k)
    d = list(distances)
    lab = list(labels)
    n = len(d)
    stats = SelectionStats()
    for phase in range(n):
        for j in range(phase % 2, n - 1, 2):
            stats.comparisons += 1
            stats.element_reads += 2
            if d[j] > d[j + 1]:
                d[j], d[j + 1] = d[j + 1], d[j]
                lab[j], lab[j + 1] = lab[j + 1], lab[j]
                stats.element_reads += 4
                stats.element_writes += 4
    return _result(d, lab, k, stats)


def _oddeven_parallel(d: np.ndarray, lab: np.ndarray, k: int):
    n = len(d)
    stats = SelectionStats()
    swaps = 0
    for phase in range(n):
        start = phase % 2
        left_d = d[start:n - 1:2]
        right_d = d[start + 1::2]
        if len(left_d) == 0:
            continue
        left_l = lab[start:n - 1:2]
        right_l = lab[start + 1::2]
        mask = left_d > right_d
        cnt = int(np.count_nonzero(mask))
        if cnt:
            tmp = left_d[mask]
            left_d[mask] = right_d[mask]
            right_d[mask] = tmp
            tmp = left_l[mask]
            left_l[mask] = right_l[mask]
            right_l[mask] = tmp
            swaps += cnt
    stats.comparisons = oddeven_comparisons(n)
    stats.element_reads = 2 * stats.comparisons + 4 * swaps
    stats.element_writes = 4 * swaps
    return _result(d, lab, k, stats)


# ---------------------------------------------------------------- Enumeration


def enumeration_select(distances, labels, k, parallel=False):
    """Stable rank sort.

    ``rank(i) = #{j : d_j < d_i} + #{j < i : d_j == d_i}``; element ``i`` is
    written once, to position ``rank(i)``.  Each ordered pair ``(i, j)``,
    ``j != i``, costs one comparison (``d_j <= d_i`` for ``j < i``, else
    ``d_j < d_i``), so the count is ``n * (n - 1)``.
    """
    _check(distances, labels, k)
    n = len(distances)
    if parallel:
        ranks = _enumeration_ranks(np.asarray(distances, dtype=float))
    else:
        d = list(distances)
        ranks = []
        for i in range(n):
            di = d[i]
            r = 0
            for j in range(i):
                if d[j] <= di:
                    r += 1
            for j in range(i + 1, n):
                if d[j] < di:
                    r += 1
            ranks.append(r)
    out_d = [0.0] * n
    out_l = [None] * n
    for i in range(n):
        out_d[ranks[i]] = distances[i]
        out_l[ranks[i]] = labels[i]
    comparisons = n * (n - 1)
    stats = SelectionStats(
        comparisons=comparisons,
        element_reads=2 * comparisons + 2 * n,
        element_writes=2 * n,
    )
    return _result(out_d, out_l, k, stats)


def enumeration_ranks(distances) -> list:
    """Stable ranks exactly as :func:`enumeration_select` computes them."""
    return [int(r) for r in _enumeration_ranks(np.asarray(distances, dtype=float))]


def _enumeration_ranks(d: np.ndarray, block: int = 1024) -> np.ndarray:
    n = len(d)
    ranks = np.empty(n, dtype=np.int64)
    cols = np.arange(n)
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        rows = d[lo:hi, None]
        less = np.count_nonzero(d[None, :] < rows, axis=1)
        ties = (d[None, :] == rows) & (cols[None, :] < cols[lo:hi, None])
        ranks[lo:hi] = less + np.count_nonzero(ties, axis=1)
    return ranks


# ---------------------------------------------------------------- registry

Selector = Callable[..., tuple]

SELECTORS: dict[str, Selector] = {
    "kmin": kmin_select,
    "bubble": bubble_select,
    "merge": merge_select,
    "oddeven": oddeven_select,
    "enumeration": enumeration_select,
}


def get_selector(name: str) -> Selector:
    try:
        return SELECTORS[name]
    except KeyError:
        raise ValueError(
            f"unknown selector {name!r}; valid identifiers: {', '.join(STRATEGIES)}"
        ) from None


def select(name: str, distances: Sequence[float], labels: Sequence[int], k: int,
           parallel: bool = False, timed: bool = False):
    """Run selector ``name``; fills ``wall_nanos`` when ``timed``."""
    fn = get_selector(name)
    if not timed:
        return fn(distances, labels, k, parallel=parallel)
    t0 = time.perf_counter_ns()
    neighbors, stats = fn(distances, labels, k, parallel=parallel)
    stats.wall_nanos = time.perf_counter_ns() - t0
    return neighbors, stats
