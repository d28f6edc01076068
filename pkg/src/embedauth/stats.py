"""Numerical primitives: means, shrunk covariance, Mahalanobis distance,
linear-interpolation percentiles and a seeded 2-means.

Every function is pure; randomness only enters through explicit seeds.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import EmptyClass, EmptyInput, InsufficientSamples, SingularCovariance

DEFAULT_SHRINKAGE = 0.05
KMEANS_RESTARTS = 16
KMEANS_MAX_ITER = 100


def as_points(points) -> np.ndarray:
    """Coerce to a finite 2-D float array (n, d)."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, 0)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D array of points, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points contain NaN or Inf")
    return arr


def mean_vector(points) -> np.ndarray:
    pts = as_points(points)
    if pts.shape[0] == 0:
        raise EmptyClass("cannot take the mean of an empty point set")
    return pts.mean(axis=0)


@dataclass(frozen=True, eq=False)
class CovMatrix:
    """A symmetric positive-definite covariance with its lower Cholesky factor.

    The factor is computed on construction so a singular matrix is rejected
    immediately. No explicit inverse is ever formed.
    """

    matrix: np.ndarray
    shrinkage: float = 0.0
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"covariance must be square, got shape {m.shape}")
        if not np.allclose(m, m.T, rtol=1e-9, atol=0.0):
            raise ValueError("covariance is not symmetric")
        try:
            chol = np.linalg.cholesky(m)
        except np.linalg.LinAlgError as exc:
            raise SingularCovariance("covariance is not positive definite") from exc
        m.setflags(write=False)
        chol.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "chol", chol)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def whiten(self, diffs) -> np.ndarray:
        """Solve L z = diff for each row; ``||z||`` is the Mahalanobis norm."""
        diffs = np.asarray(diffs, dtype=float)
        single = diffs.ndim == 1
        z = solve_triangular(self.chol, np.atleast_2d(diffs).T, lower=True, check_finite=False)
        return z.T[0] if single else z.T


def sample_covariance(points) -> np.ndarray:
    pts = as_points(points)
    n = pts.shape[0]
    if n < 2:
        raise InsufficientSamples(f"covariance needs at least 2 points, got {n}")
    centered = pts - pts.mean(axis=0)
    s = centered.T @ centered / (n - 1)
    return (s + s.T) / 2


def covariance_shrunk(points, shrinkage: float = DEFAULT_SHRINKAGE) -> CovMatrix:
    """(1-λ)·S + λ·(tr(S)/d)·I with S the n-1 sample covariance."""
    if not 0.0 <= shrinkage <= 1.0:
        raise ValueError(f"shrinkage must lie in [0, 1], got {shrinkage}")
    s = sample_covariance(points)
    d = s.shape[0]
    target = np.trace(s) / d
    shrunk = (1.0 - shrinkage) * s + shrinkage * target * np.eye(d)
    return CovMatrix(shrunk, shrinkage)


def mahalanobis(x, mu, sigma: CovMatrix):
    """sqrt((x-μ)ᵀ Σ⁻¹ (x-μ)); vectorised over rows when ``x`` is 2-D."""
    if not isinstance(sigma, CovMatrix):
        sigma = CovMatrix(sigma)
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if x.shape[-1] != sigma.dim or mu.shape[-1] != sigma.dim:
        raise ValueError(
            f"dimension mismatch: x has {x.shape[-1]}, mu has {mu.shape[-1]}, sigma is {sigma.dim}"
        )
    z = sigma.whiten(x - mu)
    if z.ndim == 1:
        return float(np.sqrt(z @ z))
    return np.sqrt(np.einsum("ij,ij->i", z, z))


def percentile(values, q: float) -> float:
    """Linear-interpolation percentile: rank r = q/100·(n-1) on the sorted values."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise EmptyInput("percentile of an empty sequence")
    if not 0.0 < q <= 100.0:
        raise ValueError(f"percentile must lie in (0, 100], got {q}")
    rank = min(q / 100.0 * (v.size - 1), v.size - 1)
    lo = int(np.floor(rank))
    hi = min(lo + 1, v.size - 1)
    frac = rank - lo
    return float(v[lo] + frac * (v[hi] - v[lo]))


@dataclass(frozen=True, eq=False)
class ClusterResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int = 0
    history: tuple = ()


def _assign(pts, centroids):
    d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    # argmin returns the first minimum, so ties go to cluster 0
    labels = np.argmin(d2, axis=1)
    return labels, float(d2[np.arange(len(pts)), labels].sum())


def _plusplus_init(pts, rng, k=2):
    n = len(pts)
    centroids = [pts[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min(((pts[:, None, :] - np.array(centroids)[None]) ** 2).sum(axis=2), axis=1)
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centroids.append(pts[idx])
    return np.array(centroids, dtype=float)


def lloyd(points, init_centroids, max_iter: int = KMEANS_MAX_ITER) -> ClusterResult:
    """Lloyd iterations from the given centroids.

    Stops once assignments no longer change or after ``max_iter`` updates.
    ``history`` holds the inertia after every assignment step.
    """
    pts = as_points(points)
    centroids = np.array(init_centroids, dtype=float)
    labels, inertia = _assign(pts, centroids)
    history = [inertia]
    n_iter = 0
    while n_iter < max_iter:
        new_centroids = centroids.copy()
        for j in range(len(centroids)):
            members = pts[labels == j]
            if len(members):
                new_centroids[j] = members.mean(axis=0)
        centroids = new_centroids
        n_iter += 1
        new_labels, inertia = _assign(pts, centroids)
        history.append(inertia)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return ClusterResult(labels, centroids, inertia, n_iter, tuple(history))


def kmeans2(points, seed: int = 0, restarts: int = KMEANS_RESTARTS) -> ClusterResult:
    """2-means with k-means++ seeding, keeping the lowest-inertia restart.

    Restart seeds are spawned from ``seed``; ties in inertia go to the
    earlier restart, so the result does not depend on execution order.
    """
    pts = as_points(points)
    if pts.shape[0] < 2:
        raise InsufficientSamples(f"k-means needs at least 2 points, got {pts.shape[0]}")
    if restarts < 1:
        raise ValueError("restarts must be positive")
    best = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        run = lloyd(pts, _plusplus_init(pts, rng))
        if best is None or run.inertia < best.inertia:
            best = run
    return best
