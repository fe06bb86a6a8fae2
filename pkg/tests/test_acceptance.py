"""End-to-end acceptance checks, one test per criterion (AC1..AC8).

``conftest.py`` prints a PASS/FAIL line per criterion after the run.
"""

import io
import math
import statistics
from pathlib import Path

import numpy as np
import pytest

from flowknn.cli import run
from flowknn.dataset import CALIBRATED, FLOOD_CLASS, SplitSpec, SynthConfig, kfold_assign, split, synth_generate
from flowknn.evalbench import bench_selectors, best_of, evaluate, tune_k
from flowknn.flowfeat import (
    Direction,
    FlowWindow,
    PacketMeta,
    Protocol,
    extract_features,
    ingest_packets,
    read_feature_csv,
    windowize,
)
from flowknn.knn import KnnConfig, predict
from flowknn.selectors import STRATEGIES, bubble_select, enumeration_select, get_selector, kmin_select

from oracles import k_smallest, kth_gap_ok, oracle_folds, oracle_mode

pytestmark = pytest.mark.acceptance

FIXTURES = Path(__file__).parent / "fixtures"
TUNE_KS = [1, 3, 5, 7, 9, 11]


def sweep_predict(train_X, train_y, queries, ks):
    """Brute-force KNN for several k at once: one stable full sort per query."""
    out = {k: [] for k in ks}
    for q in queries:
        d = np.abs(train_X - q).sum(axis=1)
        order = np.argsort(d, kind="stable")
        for k in ks:
            top = order[:k]
            out[k].append(oracle_mode([(float(d[i]), int(train_y[i])) for i in top]))
    return {k: np.array(v) for k, v in out.items()}


@pytest.fixture(scope="module")
def calibrated():
    return synth_generate(CALIBRATED)


@pytest.fixture(scope="module")
def tuned(calibrated):
    return tune_k(calibrated, TUNE_KS, folds=10, seed=0)


# ------------------------------------------------------------ AC1


def test_ac1_oracle_equivalence_500_inputs():
    rng = np.random.default_rng(20240601)
    sizes, ks = [1, 2, 10, 100, 1000, 2000], [1, 3, 5, 15, 32]
    checked = 0
    for i in range(500):
        n, k = sizes[i % len(sizes)], ks[(i // len(sizes)) % len(ks)]
        d = rng.random(n)
        if i % 3 == 0:
            d = np.round(d, 2)  # tie-heavy inputs
        labels = rng.integers(0, 5, n)
        expected = k_smallest(d.tolist(), k)
        for name in STRATEGIES:
            modes = (False, True) if n <= 100 else (True,)
            for parallel in modes:
                neigh, _ = get_selector(name)(d, labels, k, parallel=parallel)
                assert sorted(neigh.distances) == expected, (i, name, n, k, parallel)
        checked += 1
    assert checked == 500


# ------------------------------------------------------------ AC2


def test_ac2_counter_exactness_100_pairs():
    rng = np.random.default_rng(2)
    for _ in range(100):
        n, k = int(rng.integers(1, 400)), int(rng.integers(1, 64))
        d = rng.random(n)
        labels = np.zeros(n, dtype=int)
        assert enumeration_select(d, labels, k)[1].comparisons == n * (n - 1)
        expected = sum(n - 1 - i for i in range(min(k, n)))
        assert bubble_select(d, labels, k)[1].comparisons == expected


# ------------------------------------------------------------ AC3


def test_ac3_write_economy():
    kmin_w, bubble_w = [], []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        d = rng.random(1000)
        labels = rng.integers(0, 5, 1000)
        kmin_w.append(kmin_select(d, labels, 5, parallel=True)[1].element_writes)
        bubble_w.append(bubble_select(d, labels, 5, parallel=True)[1].element_writes)
    ratio = statistics.median(kmin_w) / statistics.median(bubble_w)
    print(f"median writes kmin={statistics.median(kmin_w)} bubble={statistics.median(bubble_w)} ratio={ratio:.4f}")
    assert ratio < 0.2


# ------------------------------------------------------------ AC4


def test_ac4_table_ranking_at_18000():
    report = bench_selectors([18_000], [5], reps=3, seed=0)
    med = {s: report.cell(s, 18_000, 5).to_dict()["comparisons"]["median"] for s in STRATEGIES}
    print("median comparisons:", med)
    assert med["kmin"] <= med["bubble"] < med["merge"] < min(med["enumeration"], med["oddeven"])


# ------------------------------------------------------------ AC5


def test_ac5_calibrated_accuracy(calibrated, tuned):
    assert len(calibrated) >= 10_000 and CALIBRATED.classes >= 5
    assert calibrated.label(0).name == FLOOD_CLASS
    train, test = split(calibrated, SplitSpec(0.5, seed=0))
    k = tuned.best_k
    acc = evaluate(train, test, KnnConfig(k)).accuracy
    oracle = sweep_predict(train.features, train.labels, test.features, [k])[k]
    oracle_acc = float(np.mean(oracle == test.labels))
    print(f"k={k} accuracy={acc:.4f} oracle={oracle_acc:.4f}")
    assert acc >= 0.95
    assert abs(acc - oracle_acc) <= 0.02


# ------------------------------------------------------------ AC6


def test_ac6_tune_k_matches_oracle_sweep(calibrated, tuned):
    again = tune_k(calibrated, TUNE_KS, folds=10, seed=0)
    assert again.to_json() == tuned.to_json()
    assert tuned.folds == 10 and not tuned.skipped

    assign = kfold_assign(calibrated, 10, seed=0)
    keys = np.random.default_rng([0, 1]).random(len(calibrated))
    expected = oracle_folds(calibrated.labels.tolist(), 10, keys.tolist())
    assert assign.folds.tolist() == expected

    X, y = calibrated.features, calibrated.labels
    per_k = {k: [] for k in TUNE_KS}
    for f in range(10):
        tr, te = assign.folds != f, assign.folds == f
        preds = sweep_predict(X[tr], y[tr], X[te], TUNE_KS)
        for k in TUNE_KS:
            per_k[k].append(float(np.mean(preds[k] == y[te])))
    oracle_scores = {k: sum(v) / len(v) for k, v in per_k.items()}
    top = max(oracle_scores.values())
    oracle_best = min(k for k, s in oracle_scores.items() if s == top)
    print("scores:", tuned.scores, "oracle:", oracle_scores)
    assert tuned.best_k == oracle_best == best_of(tuned.scores)
    for k in TUNE_KS:
        assert math.isclose(tuned.scores[k], oracle_scores[k], abs_tol=1e-12)


# ------------------------------------------------------------ AC7


def _pkt(t, proto, size, remote, direction, device="d"):
    if direction is Direction.OUTBOUND:
        return PacketMeta(t, device, "10.0.0.2", remote, proto, size, direction)
    return PacketMeta(t, device, remote, "10.0.0.2", proto, size, direction)


def test_ac7_feature_golden_and_partition():
    four = FlowWindow("d", 0, 20, (
        _pkt(1, Protocol.TCP, 100, "A", Direction.OUTBOUND),
        _pkt(2, Protocol.TCP, 100, "A", Direction.INBOUND),
        _pkt(3, Protocol.UDP, 60, "B", Direction.OUTBOUND),
        _pkt(4, Protocol.ICMP, 60, "C", Direction.INBOUND),
    ))
    for got, want in zip(extract_features(four).as_tuple(), (0.25, 0.5, 0.25, 0.75, 4, 80)):
        assert abs(got - want) <= 1e-12

    flood = FlowWindow("cam", 0, 20, tuple(
        _pkt(i * 0.01, Protocol.UDP, 64, f"172.16.{i // 256}.{i % 256}", Direction.INBOUND) for i in range(1000)
    ))
    for got, want in zip(extract_features(flood).as_tuple(), (0, 0, 1, 1, 1000, 64)):
        assert abs(got - want) <= 1e-12

    with open(FIXTURES / "packets.csv") as fh:
        windows = windowize(ingest_packets(fh), 20)
    golden = read_feature_csv(io.StringIO((FIXTURES / "features.golden.csv").read_text()))
    # golden values are printed to 9 significant digits; recompute the exact ones
    exact = {("plug1", 0): (0, 1, 0, 1 / 3, 3, 1580 / 3)}
    assert len(windows) == len(golden)
    for w, g in zip(windows, golden):
        assert (w.device_id, w.window_start) == (g.device_id, g.window_start)
        want = exact.get((g.device_id, g.window_start), g.features.as_tuple())
        for got, ref in zip(extract_features(w).as_tuple(), want):
            assert abs(got - ref) <= 1e-12

    rng = np.random.default_rng(7)
    packets = [_pkt(float(t), Protocol.TCP, 1, "r", Direction.OUTBOUND, f"dev{dev}")
               for t, dev in zip(rng.uniform(0, 7200, 10_000), rng.integers(0, 8, 10_000))]
    windows = windowize(packets, 20)
    seen = []
    for w in windows:
        assert w.packets
        for p in w.packets:
            assert w.window_start <= p.timestamp < w.window_start + 20
            assert p.device_id == w.device_id
            seen.append(id(p))
    assert len(seen) == 10_000 and set(seen) == {id(p) for p in packets}


# ------------------------------------------------------------ AC8


def test_ac8_selector_invariance_library_and_cli(tmp_path):
    data = synth_generate(SynthConfig(classes=6, samples_per_class=400, cluster_spread=0.05, seed=11, label_noise=0.05))
    train, test = split(data, SplitSpec(0.5, seed=3))
    test = test.subset(range(1000))
    k = 5
    assert kth_gap_ok(train.features, test.features, k), "split is not tie-free"

    library = {name: predict(train, test.features, KnnConfig(k, name)).tolist() for name in STRATEGIES}
    assert all(v == library["kmin"] for v in library.values())

    model, queries = tmp_path / "train.csv", tmp_path / "queries.csv"
    with open(model, "w", newline="") as fh:
        train.write_csv(fh)
    with open(queries, "w", newline="") as fh:
        test.write_csv(fh)
    names = [lab.name for lab in data.label_table]
    for name in STRATEGIES:
        out, err = io.StringIO(), io.StringIO()
        code = run(["classify", "--model", str(model), "--in", str(queries), "--k", str(k), "--selector", name],
                   out, err)
        assert code == 0, err.getvalue()
        got = [line.split(",")[2] for line in out.getvalue().splitlines()]
        assert got == [names[o] for o in library["kmin"]], name
