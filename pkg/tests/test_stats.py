import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from embedauth import stats
from embedauth.errors import EmptyClass, EmptyInput, InsufficientSamples, SingularCovariance


def brute_force_2means(points):
    """Minimum within-cluster sum of squares over every 2-partition."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    best = np.inf
    for mask in itertools.product([0, 1], repeat=n - 1):
        labels = np.array((0,) + mask)
        total = 0.0
        for j in (0, 1):
            members = pts[labels == j]
            if len(members):
                total += ((members - members.mean(axis=0)) ** 2).sum()
        best = min(best, total)
    return best


finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


# -- mean_vector ---------------------------------------------------------------

def test_mean_midpoint():
    np.testing.assert_array_equal(stats.mean_vector([(0, 0), (2, 2)]), [1, 1])


def test_mean_singleton():
    np.testing.assert_array_equal(stats.mean_vector([(3, -1)]), [3, -1])


def test_mean_monte_carlo():
    X = np.random.default_rng(2024).standard_normal((1000, 3))
    m = stats.mean_vector(X)
    # frozen value for this seed
    np.testing.assert_allclose(m, [-0.01651272, 0.03896104, -0.09033742], atol=1e-8)
    assert np.all(np.abs(m) < 0.15)


def test_mean_empty():
    with pytest.raises(EmptyClass):
        stats.mean_vector(np.empty((0, 3)))


# -- covariance_shrunk -----------------------------------------------------------

def test_covariance_rank_deficient_unshrunk_is_singular():
    with pytest.raises(SingularCovariance):
        stats.covariance_shrunk([(0, 0), (2, 0)], 0.0)


def test_covariance_half_shrinkage():
    cov = stats.covariance_shrunk([(0, 0), (2, 0)], 0.5)
    np.testing.assert_allclose(cov.matrix, [[1.5, 0], [0, 0.5]], rtol=1e-12)


def test_covariance_identity_monte_carlo():
    X = np.random.default_rng(11).standard_normal((5000, 3))
    cov = stats.covariance_shrunk(X, 0.1)
    assert np.max(np.abs(cov.matrix - np.eye(3))) < 0.1


def test_covariance_needs_two_points():
    with pytest.raises(InsufficientSamples):
        stats.covariance_shrunk([(1, 2)], 0.1)


def test_covariance_matches_numpy():
    X = np.random.default_rng(3).standard_normal((40, 4))
    np.testing.assert_allclose(stats.covariance_shrunk(X, 0.0).matrix, np.cov(X.T, ddof=1), rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 5)), elements=finite),
       st.floats(0.01, 1.0))
def test_covariance_shrunk_is_symmetric_pd(X, lam):
    s = stats.sample_covariance(X)
    if np.trace(s) <= 1e-9:
        return
    cov = stats.covariance_shrunk(X, lam)
    np.testing.assert_array_equal(cov.matrix, cov.matrix.T)
    floor = lam * np.trace(s) / s.shape[0]
    assert np.linalg.eigvalsh(cov.matrix).min() >= floor - 1e-9 * max(1.0, np.trace(s))


# -- mahalanobis ----------------------------------------------------------------

def test_mahalanobis_zero_displacement():
    cov = stats.CovMatrix(np.array([[2.0, 0.3], [0.3, 1.0]]))
    assert stats.mahalanobis([1.5, -2.0], [1.5, -2.0], cov) == 0.0


def test_mahalanobis_unit_step():
    assert stats.mahalanobis([1, 0], [0, 0], np.eye(2)) == pytest.approx(1.0, rel=1e-12)


def test_mahalanobis_scaled_axis():
    assert stats.mahalanobis([2, 0], [0, 0], np.diag([4.0, 1.0])) == pytest.approx(1.0, rel=1e-12)


def test_mahalanobis_singular():
    with pytest.raises(SingularCovariance):
        stats.mahalanobis([1, 0], [0, 0], np.array([[1.0, 0.0], [0.0, 0.0]]))


def test_mahalanobis_batch_matches_single():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((20, 3))
    cov = stats.covariance_shrunk(rng.standard_normal((50, 3)), 0.05)
    mu = np.array([0.1, 0.2, -0.3])
    batch = stats.mahalanobis(X, mu, cov)
    single = [stats.mahalanobis(x, mu, cov) for x in X]
    np.testing.assert_allclose(batch, single, rtol=1e-12)
    # explicit-inverse oracle
    inv = np.linalg.inv(cov.matrix)
    oracle = np.sqrt(np.einsum("ij,jk,ik->i", X - mu, inv, X - mu))
    np.testing.assert_allclose(batch, oracle, rtol=1e-9)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 4, elements=finite), arrays(np.float64, 4, elements=finite))
def test_mahalanobis_identity_is_euclidean_and_symmetric(x, mu):
    d = stats.mahalanobis(x, mu, np.eye(4))
    assert d >= 0
    assert d == pytest.approx(np.linalg.norm(x - mu), rel=1e-9, abs=1e-12)
    assert stats.mahalanobis(mu, x, np.eye(4)) == pytest.approx(d, rel=1e-12, abs=1e-12)


# -- percentile -------------------------------------------------------------------

def test_percentile_median():
    assert stats.percentile([1, 2, 3, 4, 5], 50) == 3


def test_percentile_interpolates():
    assert stats.percentile([1, 2, 3, 4, 5], 99) == pytest.approx(4.96, rel=1e-12)
    assert stats.percentile([1, 2, 3, 4, 5], 100) == 5


def test_percentile_singleton():
    for q in (1, 50, 99.9):
        assert stats.percentile([7], q) == 7


def test_percentile_empty():
    with pytest.raises(EmptyInput):
        stats.percentile([], 50)


@settings(max_examples=100, deadline=None)
@given(st.lists(finite, min_size=1, max_size=30), st.floats(0.1, 100), st.floats(0.1, 100))
def test_percentile_monotone_bounded_and_matches_numpy(values, q1, q2):
    lo, hi = sorted((q1, q2))
    a, b = stats.percentile(values, lo), stats.percentile(values, hi)
    assert a <= b + 1e-12
    assert min(values) - 1e-12 <= a and b <= max(values) + 1e-12
    assert a == pytest.approx(np.percentile(values, lo, method="linear"), rel=1e-9, abs=1e-9)


# -- kmeans2 ----------------------------------------------------------------------

def test_kmeans_separates_pairs():
    pts = [(0, 0), (0, 0.1), (10, 10), (10, 10.1)]
    res = stats.kmeans2(pts, seed=0)
    assert res.assignments[0] == res.assignments[1] != res.assignments[2] == res.assignments[3]
    assert res.inertia == pytest.approx(0.01, rel=1e-9)
    assert res.inertia == pytest.approx(brute_force_2means(pts), rel=1e-9)


def test_kmeans_identical_points():
    res = stats.kmeans2([(1.0, 2.0), (1.0, 2.0)], seed=3)
    assert res.inertia == 0.0


def test_kmeans_recovers_far_gaussians():
    rng = np.random.default_rng(8)
    truth = np.repeat([0, 1], 25)
    X = rng.standard_normal((50, 3)) + np.where(truth[:, None] == 1, 20.0, 0.0)
    res = stats.kmeans2(X, seed=1)
    agree = np.mean(res.assignments == truth)
    assert agree in (0.0, 1.0)


def test_kmeans_needs_two_points():
    with pytest.raises(InsufficientSamples):
        stats.kmeans2([(0, 0)])


def test_kmeans_deterministic():
    X = np.random.default_rng(4).standard_normal((60, 5))
    a, b = stats.kmeans2(X, seed=9), stats.kmeans2(X, seed=9)
    np.testing.assert_array_equal(a.assignments, b.assignments)
    np.testing.assert_array_equal(a.centroids, b.centroids)
    assert a.inertia == b.inertia


def test_kmeans_result_invariants():
    X = np.random.default_rng(6).standard_normal((40, 2))
    res = stats.kmeans2(X, seed=2)
    d2 = ((X[:, None, :] - res.centroids[None]) ** 2).sum(axis=2)
    # nearer centroid, ties to cluster 0
    np.testing.assert_array_equal(res.assignments, np.where(d2[:, 1] < d2[:, 0], 1, 0))
    recomputed = d2[np.arange(len(X)), res.assignments].sum()
    assert res.inertia == pytest.approx(recomputed, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 9), st.just(2)), elements=finite), st.integers(0, 2**32))
def test_kmeans_never_beats_brute_force_and_lloyd_is_monotone(X, seed):
    res = stats.kmeans2(X, seed=seed)
    opt = brute_force_2means(X)
    assert res.inertia >= opt - 1e-9 * max(1.0, opt)
    hist = np.array(res.history)
    assert np.all(np.diff(hist) <= 1e-9 * max(1.0, hist[0]))
