import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embedauth.aggregation import AggregationRule, ModelUpdate, aggregate, fedavg, krum, trimmed_mean
from embedauth.errors import EmptyRound, TooFewClients


def updates_from(rows, sizes=None):
    sizes = sizes or [1] * len(rows)
    return [ModelUpdate(f"c{i:02d}", np.asarray(r, dtype=float), n) for i, (r, n) in enumerate(zip(rows, sizes))]


def krum_oracle(updates, f):
    """Naive double loop over the updates, sorted by client id."""
    ups = sorted(updates, key=lambda u: u.client_id)
    n = len(ups)
    best, best_score = None, None
    for i in range(n):
        dists = []
        for j in range(n):
            if i != j:
                diff = ups[i].params - ups[j].params
                dists.append(float(np.dot(diff, diff)))
        dists.sort()
        score = sum(dists[: n - f - 2])
        if best_score is None or score < best_score:
            best, best_score = ups[i], score
    return best.params


def trimmed_oracle(rows, m):
    rows = np.asarray(rows, dtype=float)
    out = []
    for col in rows.T:
        kept = sorted(col)[m:len(col) - m]
        out.append(sum(kept) / len(kept))
    return np.array(out)


# -- fedavg ---------------------------------------------------------------------------

def test_fedavg_weighted():
    np.testing.assert_allclose(fedavg(updates_from([(1, 1), (3, 3)], [1, 3])), [2.5, 2.5], rtol=1e-12)


def test_fedavg_single():
    np.testing.assert_array_equal(fedavg(updates_from([(4, -2, 7)])), [4, -2, 7])


def test_fedavg_symmetric():
    v = np.array([1.5, -3.0, 0.25])
    np.testing.assert_allclose(fedavg(updates_from([v, -v], [5, 5])), 0, atol=1e-15)


def test_fedavg_empty():
    with pytest.raises(EmptyRound):
        fedavg([])


def test_fedavg_mismatched_sizes():
    with pytest.raises(ValueError):
        fedavg(updates_from([(1, 2), (1, 2, 3)]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(1, 8))
def test_fedavg_identities(seed, n, p):
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((n, p))
    sizes = rng.integers(1, 500, n).tolist()
    ups = updates_from(rows, sizes)
    w = np.array(sizes, dtype=float)
    np.testing.assert_allclose(fedavg(ups), (w[:, None] * rows).sum(axis=0) / w.sum(), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(fedavg(updates_from(rows, [7] * n)), rows.mean(axis=0), rtol=1e-12, atol=1e-12)
    perm = rng.permutation(n)
    np.testing.assert_array_equal(fedavg([ups[i] for i in perm]), fedavg(ups))


# -- trimmed mean ------------------------------------------------------------------------

def test_trimmed_median_survives():
    assert trimmed_mean(updates_from([[1], [2], [100]]), beta=0.34)[0] == 2


def test_trimmed_beta_zero_is_mean():
    rows = np.random.default_rng(0).standard_normal((6, 3))
    np.testing.assert_allclose(trimmed_mean(updates_from(rows), 0.0), rows.mean(axis=0), rtol=1e-12)


def test_trimmed_drops_outlier():
    assert trimmed_mean(updates_from([[0], [0], [0], [0], [1000]]), beta=0.2)[0] == 0


def test_trimmed_too_few():
    # beta < 0.5 always leaves survivors; the guard only trips for beta >= 0.5
    trimmed_mean(updates_from([[0], [1]]), beta=0.49)
    with pytest.raises(TooFewClients):
        trimmed_mean(updates_from([[0], [1]]), beta=0.5)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 10), st.integers(1, 8), st.floats(0, 0.49))
def test_trimmed_matches_oracle(seed, n, p, beta):
    m = int(np.floor(beta * n))
    if n <= 2 * m:
        return
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((n, p)) * rng.choice([1, 100], (n, 1))
    out = trimmed_mean(updates_from(rows), beta)
    np.testing.assert_allclose(out, trimmed_oracle(rows, m), rtol=1e-12, atol=1e-12)
    kept = np.sort(rows, axis=0)[m:n - m]
    assert np.all(out >= kept.min(axis=0) - 1e-12) and np.all(out <= kept.max(axis=0) + 1e-12)
    perm = rng.permutation(n)
    np.testing.assert_array_equal(trimmed_mean(updates_from(rows[perm]), beta), out)


# -- krum ---------------------------------------------------------------------------------

def test_krum_rejects_outlier():
    rng = np.random.default_rng(1)
    rows = list(0.1 * rng.standard_normal((4, 3))) + [np.full(3, 100.0)]
    ups = updates_from(rows)
    chosen = krum(ups, f=1)
    assert any(np.array_equal(chosen, u.params) for u in ups[:4])
    np.testing.assert_array_equal(chosen, krum_oracle(ups, 1))


def test_krum_identical_updates():
    ups = [ModelUpdate(cid, np.ones(2), 1) for cid in ("c3", "c1", "c2", "c0", "c4")]
    np.testing.assert_array_equal(krum(ups, f=1), np.ones(2))


def test_krum_tie_break_prefers_lowest_id():
    # two exact clusters of equal size; both members score 0
    ups = [ModelUpdate("b", np.array([5.0]), 1), ModelUpdate("a", np.array([0.0]), 1),
           ModelUpdate("d", np.array([5.0]), 1), ModelUpdate("c", np.array([0.0]), 1),
           ModelUpdate("e", np.array([0.0]), 1), ModelUpdate("f", np.array([5.0]), 1)]
    np.testing.assert_array_equal(krum(ups, f=1), [0.0])


def test_krum_boundary():
    ups = updates_from(np.zeros((4, 2)))
    with pytest.raises(TooFewClients):
        krum(ups, f=1)
    krum(updates_from(np.zeros((5, 2))), f=1)


def test_krum_matches_brute_force_200_instances():
    rng = np.random.default_rng(2025)
    checked = 0
    while checked < 200:
        n = int(rng.integers(3, 11))
        p = int(rng.integers(1, 9))
        f = int(rng.integers(0, (n - 3) // 2 + 1))
        rows = rng.standard_normal((n, p)) * rng.choice([1.0, 10.0], (n, 1))
        ups = updates_from(rows)
        order = rng.permutation(n)
        result = krum([ups[i] for i in order], f)
        np.testing.assert_array_equal(result, krum_oracle(ups, f))
        assert any(np.array_equal(result, r) for r in rows)
        checked += 1


def test_rule_dispatch_and_validation():
    ups = updates_from(np.arange(15.0).reshape(5, 3))
    np.testing.assert_array_equal(aggregate(ups, AggregationRule("fedavg")), fedavg(ups))
    np.testing.assert_array_equal(aggregate(ups, AggregationRule("trimmed_mean", beta=0.2)), trimmed_mean(ups, 0.2))
    np.testing.assert_array_equal(aggregate(ups, AggregationRule("krum", f=1)), krum(ups, 1))
    with pytest.raises(ValueError):
        AggregationRule("median")
    with pytest.raises(ValueError):
        AggregationRule("trimmed_mean", beta=0.5)
