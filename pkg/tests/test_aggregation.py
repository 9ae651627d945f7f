import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfc_sim import aggregation
from rfc_sim.aggregation import AggregatorConfig, bulyan, fedavg, geomed, krum, krum_scores


# Brute-force reimplementations in plain Python, independent of the library path.

def bf_sq_dist(a, b):
    return sum((x - y) ** 2 for x, y in zip(a, b))


def bf_mean(updates):
    n = len(updates)
    dim = len(updates[0])
    out = []
    for k in range(dim):
        acc = 0.0
        for u in updates:
            acc += u[k]
        out.append(acc / n)
    return out


def bf_krum_scores(updates, f):
    n = len(updates)
    scores = []
    for i in range(n):
        dists = sorted(bf_sq_dist(updates[i], updates[j]) for j in range(n) if j != i)
        scores.append(sum(dists[: n - f - 2]))
    return scores


def bf_krum(updates, f):
    scores = bf_krum_scores(updates, f)
    return updates[scores.index(min(scores))]


def bf_bulyan(updates, f, m):
    scores = bf_krum_scores(updates, f)
    order = sorted(range(len(updates)), key=lambda i: (scores[i], i))[:m]
    return bf_mean([updates[i] for i in order])


def bf_geomed(updates):
    totals = [sum(bf_sq_dist(u, v) for v in updates) for u in updates]
    return updates[totals.index(min(totals))]


def vecs(rows):
    return [np.array(r, dtype=np.float64) for r in rows]


def test_fedavg_examples():
    assert np.array_equal(fedavg(vecs([[1, 3], [3, 5]])), np.array([2.0, 4.0]))
    v = np.array([0.25, -1.5])
    assert np.array_equal(fedavg([v] * 5), v)
    with pytest.raises(ValueError):
        fedavg([])


def test_fedavg_matches_bruteforce_random():
    rng = random.Random(7)
    updates = vecs([[rng.uniform(-5, 5) for _ in range(8)] for _ in range(5)])
    expected = bf_mean([list(u) for u in updates])
    assert np.allclose(fedavg(updates), expected, rtol=1e-12, atol=1e-12)


def test_krum_scores_worked_example():
    updates = vecs([[0.0], [0.1], [0.2], [10.0]])
    scores = krum_scores(updates, f=1)
    assert scores == pytest.approx([0.01, 0.01, 0.01, 96.04], rel=1e-9)
    assert scores == pytest.approx(bf_krum_scores([list(u) for u in updates], 1), rel=1e-12)


def test_krum_selects_lowest_index_on_tie():
    updates = vecs([[0.0], [0.1], [0.2], [10.0]])
    assert krum(updates, f=1) is updates[0]


def test_krum_scores_identical_updates():
    updates = [np.array([1.0, 2.0])] * 5
    assert krum_scores(updates, f=1) == [0.0] * 5


def test_krum_scores_translation_invariant():
    rng = random.Random(3)
    updates = vecs([[rng.uniform(-2, 2) for _ in range(3)] for _ in range(6)])
    shifted = [u + 7.5 for u in updates]
    assert krum_scores(updates, 2) == pytest.approx(krum_scores(shifted, 2), rel=1e-9, abs=1e-9)


def test_krum_rejects_far_outlier():
    rng = random.Random(11)
    for _ in range(20):
        n = rng.randint(4, 8)
        f = rng.randint(1, n - 3)
        cluster = [[rng.uniform(0, 1) for _ in range(3)] for _ in range(n - 1)]
        outlier = [1000.0 + rng.uniform(0, 1) for _ in range(3)]
        pos = rng.randrange(n)
        rows = cluster[:pos] + [outlier] + cluster[pos:]
        chosen = krum(vecs(rows), f)
        assert not np.array_equal(chosen, np.array(outlier))
        assert np.array_equal(chosen, np.array(bf_krum(rows, f)))


def test_krum_too_few_updates():
    with pytest.raises(ValueError):
        krum_scores(vecs([[0.0], [1.0], [2.0]]), f=1)


def test_bulyan_collapses_to_fedavg_and_krum():
    rng = random.Random(5)
    updates = vecs([[rng.uniform(-1, 1) for _ in range(2)] for _ in range(6)])
    assert np.allclose(bulyan(updates, 1, m=6), fedavg(updates), rtol=1e-12)
    assert np.array_equal(bulyan(updates, 1, m=1), krum(updates, 1))


def test_bulyan_worked_example():
    updates = vecs([[0.0], [0.1], [10.0], [10.1], [0.2]])
    out = bulyan(updates, f=1, m=3)
    assert out == pytest.approx([0.1], rel=1e-12)
    assert out == pytest.approx(bf_bulyan([list(u) for u in updates], 1, 3), rel=1e-12)


def test_bulyan_m_exceeds_n():
    with pytest.raises(ValueError):
        bulyan(vecs([[0.0], [1.0], [2.0], [3.0]]), f=1, m=5)


def test_geomed_examples():
    updates = vecs([[0.0], [0.0], [10.0]])
    assert np.array_equal(geomed(updates), np.array([0.0]))
    single = np.array([3.0, 4.0])
    assert geomed([single]) is single
    with pytest.raises(ValueError):
        geomed([])


def test_geomed_permutation_invariant_value():
    import itertools
    rng = random.Random(9)
    rows = [[rng.uniform(-3, 3) for _ in range(2)] for _ in range(4)]
    baseline = geomed(vecs(rows))
    expected = bf_geomed(rows)
    assert np.allclose(baseline, expected, rtol=1e-12)
    for perm in itertools.permutations(rows):
        assert np.array_equal(geomed(vecs(list(perm))), baseline)


point = st.floats(min_value=-100, max_value=100, allow_nan=False, allow_infinity=False)


@settings(max_examples=40)
@given(st.integers(1, 3), st.integers(4, 6), st.randoms(use_true_random=False))
def test_selection_rules_permutation_invariant_distinct_scores(dim, n, rnd):
    from hypothesis import assume
    rows = [[rnd.uniform(-10, 10) for _ in range(dim)] for _ in range(n)]
    f = rnd.randint(0, n - 3)
    m = rnd.randint(1, n)
    scores = bf_krum_scores(rows, f)
    totals = [sum(bf_sq_dist(u, v) for v in rows) for u in rows]
    assume(len(set(scores)) == n and len(set(totals)) == n)
    shuffled = list(rows)
    rnd.shuffle(shuffled)
    assert np.allclose(krum(vecs(rows), f), krum(vecs(shuffled), f), rtol=1e-12)
    assert np.allclose(geomed(vecs(rows)), geomed(vecs(shuffled)), rtol=1e-12)
    assert np.allclose(bulyan(vecs(rows), f, m), bulyan(vecs(shuffled), f, m), rtol=1e-12, atol=1e-12)


def test_tied_scores_stable_under_order_preserving_permutation():
    # two tied low-score updates keep their relative order; the chosen values
    # must not change even though a third element moves around them
    a1, a2, far = [0.0, 0.0], [0.0, 0.0], [9.0, 9.0]
    orderings = ([a1, a2, far, [0.1, 0.1]], [a1, [0.1, 0.1], a2, far], [[0.1, 0.1], a1, a2, far])
    geo_values = []
    for rows in orderings:
        assert np.array_equal(krum(vecs(rows), f=1), np.array(a1))
        assert np.allclose(bulyan(vecs(rows), f=1, m=2), np.array(a1), rtol=1e-12)
        geo_values.append(geomed(vecs(rows)))
    assert all(np.array_equal(v, geo_values[0]) for v in geo_values)


@settings(max_examples=40)
@given(st.integers(4, 6), st.randoms(use_true_random=False))
def test_translation_equivariance(n, rnd):
    dim = 2
    rows = [[rnd.uniform(-5, 5) for _ in range(dim)] for _ in range(n)]
    f = rnd.randint(0, n - 3)
    shift = np.array([rnd.uniform(-20, 20) for _ in range(dim)])
    updates = vecs(rows)
    shifted = [u + shift for u in updates]
    for rule in (lambda us: fedavg(us), lambda us: krum(us, f),
                 lambda us: bulyan(us, f, max(1, n - f)), lambda us: geomed(us)):
        assert np.allclose(rule(shifted), rule(updates) + shift, rtol=1e-9, atol=1e-9)


@settings(max_examples=40)
@given(st.integers(1, 2), st.randoms(use_true_random=False))
def test_outlier_rejection_bounding_box(f, rnd):
    n = 2 * f + 3
    dim = 2
    r = 0.5
    center = [rnd.uniform(-5, 5) for _ in range(dim)]
    benign = [[center[k] + rnd.uniform(-r, r) for k in range(dim)] for _ in range(n - f)]
    outliers = []
    for _ in range(f):
        direction = [rnd.uniform(-1, 1) for _ in range(dim)]
        norm = math.sqrt(sum(d * d for d in direction)) or 1.0
        dist = rnd.uniform(100 * r, 200 * r)
        outliers.append([center[k] + dist * direction[k] / norm for k in range(dim)])
    rows = benign + outliers
    order = list(range(n))
    rnd.shuffle(order)
    updates = vecs([rows[i] for i in order])
    lo = np.min(np.array(benign), axis=0) - 1e-9
    hi = np.max(np.array(benign), axis=0) + 1e-9
    for out in (krum(updates, f), bulyan(updates, f, m=n - f), geomed(updates)):
        assert np.all(out >= lo) and np.all(out <= hi)


def test_aggregate_dispatch_and_min_updates():
    updates = vecs([[0.0], [0.1], [0.2], [5.0], [0.3]])
    cfg_avg = AggregatorConfig(rule="fedavg")
    assert np.allclose(aggregation.aggregate(cfg_avg, updates), fedavg(updates))
    cfg_krum = AggregatorConfig(rule="krum", krum_f=1)
    assert np.array_equal(aggregation.aggregate(cfg_krum, updates), krum(updates, 1))
    cfg_bul = AggregatorConfig(rule="bulyan", krum_f=1, bulyan_m=3)
    assert np.allclose(aggregation.aggregate(cfg_bul, updates), bulyan(updates, 1, 3))
    cfg_geo = AggregatorConfig(rule="geomed")
    assert np.array_equal(aggregation.aggregate(cfg_geo, updates), geomed(updates))
    assert aggregation.min_updates(cfg_avg) == 1
    assert aggregation.min_updates(cfg_krum) == 4
    assert aggregation.min_updates(cfg_bul) == 4
    assert aggregation.min_updates(AggregatorConfig(rule="bulyan", krum_f=1, bulyan_m=6)) == 6
    assert aggregation.min_updates(cfg_geo) == 1


def test_aggregator_config_validation():
    with pytest.raises(ValueError):
        AggregatorConfig(rule="median")
    with pytest.raises(ValueError):
        AggregatorConfig(krum_f=-1)
    with pytest.raises(ValueError):
        AggregatorConfig(bulyan_m=0)
