import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowknn.dataset import ClassLabel, Dataset
from flowknn.flowfeat import FeatureVector
from flowknn.knn import KnnConfig, classify, distances_to, manhattan, mode_with_tiebreak, predict
from flowknn.selectors import STRATEGIES, NeighborSet

from oracles import k_smallest, kth_gap_ok, l1_loop, oracle_knn_predict

A, B = 0, 1
TABLE = [ClassLabel(0, "A"), ClassLabel(1, "B")]


def ns(*entries, k=None):
    return NeighborSet(tuple(entries), k or len(entries))


def test_manhattan_examples():
    a = FeatureVector(0.25, 0.5, 0.25, 0.75, 4, 80)
    b = FeatureVector(0.25, 0.5, 0.25, 0.5, 6, 70)
    assert manhattan(a, a) == 0
    assert manhattan(a, b) == 12.25


def test_manhattan_dimension_mismatch():
    with pytest.raises(ValueError):
        manhattan((1, 2), (1, 2, 3))
    with pytest.raises(ValueError):
        distances_to(np.zeros((3, 6)), (1, 2))


def test_manhattan_matches_loop_oracle_on_random_pairs():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        a = rng.uniform(-1e3, 1e3, 6)
        b = rng.uniform(-1e3, 1e3, 6)
        ref = l1_loop(a, b)
        assert abs(manhattan(a, b) - ref) <= 1e-12 * max(1.0, abs(ref))


def test_vectorized_distances_bit_identical_to_scalar():
    rng = np.random.default_rng(1)
    X = rng.uniform(0, 500, (300, 6))
    q = rng.uniform(0, 500, 6)
    d = distances_to(X, q)
    assert [float(v) for v in d] == [manhattan(x, q) for x in X]


vec = st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=6, max_size=6)


@settings(max_examples=200, deadline=None)
@given(vec, vec, vec)
def test_manhattan_metric_properties(a, b, c):
    ab, ba = manhattan(a, b), manhattan(b, a)
    assert ab == ba
    assert ab >= 0
    assert (ab == 0) == (a == b)
    scale = max(1.0, ab, manhattan(a, c), manhattan(c, b))
    assert ab <= manhattan(a, c) + manhattan(c, b) + 1e-12 * scale


# ------------------------------------------------------------ mode


def test_mode_strict_majority():
    assert mode_with_tiebreak(ns((1, A), (2, A), (9, B))) == A


def test_mode_tie_broken_by_distance_sum():
    assert mode_with_tiebreak(ns((1, A), (2, B))) == A
    assert mode_with_tiebreak(ns((2, A), (1, B))) == B


def test_mode_tie_broken_by_ordinal():
    assert mode_with_tiebreak(ns((1, B), (1, A))) == A


def test_mode_sum_is_order_independent():
    # 0.1 + 0.2 + 0.3 differs from 0.3 + 0.2 + 0.1 in naive float addition
    e1 = [(0.1, A), (0.2, A), (0.3, A), (0.6, B), (0.0, B), (0.0, B)]
    e2 = list(reversed(e1))
    assert mode_with_tiebreak(ns(*e1)) == mode_with_tiebreak(ns(*e2))


def test_mode_empty():
    with pytest.raises(ValueError):
        mode_with_tiebreak(ns(k=3))


# ------------------------------------------------------------ classify


def dataset(X, y, n_classes=2):
    return Dataset(X, y, [ClassLabel(i, f"c{i}") for i in range(n_classes)])


def test_classify_singleton():
    train = dataset([[1, 2, 3, 4, 5, 6]], [1])
    res = classify(train, FeatureVector(0, 0, 0, 0, 0, 0), KnnConfig(k=1))
    assert res.label == ClassLabel(1, "c1")
    assert len(res.neighbors) == 1


def test_classify_majority_of_three():
    X = np.zeros((3, 6))
    X[:, 0] = [1, 2, 9]
    train = dataset(X, [A, A, B])
    for name in STRATEGIES:
        res = classify(train, np.zeros(6), KnnConfig(3, name))
        assert res.label.ordinal == A
        assert sorted(res.neighbors.distances) == [1, 2, 9]


def test_classify_returns_min_k_n():
    train = dataset(np.eye(6)[:4], [0, 1, 0, 1])
    res = classify(train, np.zeros(6), KnnConfig(k=10))
    assert len(res.neighbors) == 4


def test_classify_rejects_empty_and_bad_config():
    empty = dataset(np.zeros((0, 6)), [])
    with pytest.raises(ValueError):
        classify(empty, np.zeros(6))
    with pytest.raises(ValueError):
        KnnConfig(k=0)
    with pytest.raises(ValueError):
        KnnConfig(selector="heap")


def test_classify_stats_are_the_selectors():
    from flowknn.selectors import select

    rng = np.random.default_rng(4)
    train = dataset(rng.random((200, 6)), rng.integers(0, 2, 200))
    q = rng.random(6)
    for name in STRATEGIES:
        res = classify(train, q, KnnConfig(5, name))
        _, stats = select(name, distances_to(train.features, q), train.labels, 5)
        assert res.stats.counters() == stats.counters()


def test_all_selectors_agree_with_bruteforce_oracle():
    rng = np.random.default_rng(17)
    X = rng.uniform(0, 100, (500, 6))
    y = rng.integers(0, 4, 500)
    train = dataset(X, y, 4)
    queries = rng.uniform(0, 100, (50, 6))
    for k in (1, 5, 9):
        assert kth_gap_ok(X, queries, k)
        expected = oracle_knn_predict(X, y, queries, k)
        for name in STRATEGIES:
            got = predict(train, queries, KnnConfig(k, name))
            assert np.array_equal(got, expected), (name, k)


def test_neighbor_distances_equal_oracle_and_permutation_invariant():
    rng = np.random.default_rng(23)
    X = np.round(rng.uniform(0, 10, (120, 6)), 1)  # coarse grid: plenty of ties
    y = rng.integers(0, 3, 120)
    perm = rng.permutation(120)
    a = dataset(X, y, 3)
    b = dataset(X[perm], y[perm], 3)
    for q in rng.uniform(0, 10, (20, 6)):
        full = [manhattan(x, q) for x in X]
        for name in STRATEGIES:
            for k in (1, 4, 7):
                na = classify(a, q, KnnConfig(k, name)).neighbors
                nb = classify(b, q, KnnConfig(k, name)).neighbors
                assert sorted(na.distances) == k_smallest(full, k)
                assert sorted(na.distances) == sorted(nb.distances)
