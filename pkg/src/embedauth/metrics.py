"""Per-client anomaly metrics against a reference model.

F is the outlier fraction, M the mean class shift, C the micro-cluster
score, and S combines them as ``w_F * F**p + w_M * M + w_C * C``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import stats
from .errors import DimMismatch, EmptySubmission, UnknownClass
from .reference import ReferenceModel


@dataclass(frozen=True)
class MetricWeights:
    w_F: float = 1.0
    w_M: float = 0.1
    w_C: float = 0.25
    p: float = 2.0

    def __post_init__(self):
        ws = (self.w_F, self.w_M, self.w_C)
        if any(w < 0 for w in ws):
            raise ValueError(f"metric weights must be nonnegative, got {ws}")
        if not any(w > 0 for w in ws):
            raise ValueError("at least one metric weight must be positive")
        if self.p < 1:
            raise ValueError(f"exponent p must be >= 1, got {self.p}")

    def scaled(self, alpha: float) -> "MetricWeights":
        return MetricWeights(alpha * self.w_F, alpha * self.w_M, alpha * self.w_C, self.p)


@dataclass(frozen=True)
class MicroClusterParams:
    """Thresholds for flagging a 2-means cluster as a trigger pocket.

    A cluster is suspicious when its share of client points is at least
    ``purity_min``, its RMS radius is at most ``compact_ratio`` times the
    reference class RMS radius, and its centroid sits further than
    ``centroid_factor * tau`` from the class mean.
    """

    purity_min: float = 0.9
    centroid_factor: float = 1.0
    compact_ratio: float = 1.0
    restarts: int = stats.KMEANS_RESTARTS

    def __post_init__(self):
        if not 0.5 < self.purity_min <= 1.0:
            raise ValueError(f"purity_min must lie in (0.5, 1], got {self.purity_min}")
        if self.centroid_factor < 1.0:
            raise ValueError(f"centroid_factor must be >= 1, got {self.centroid_factor}")
        if not 0.0 < self.compact_ratio <= 1.0:
            raise ValueError(f"compact_ratio must lie in (0, 1], got {self.compact_ratio}")
        if self.restarts < 1:
            raise ValueError("restarts must be positive")


@dataclass(frozen=True, eq=False)
class ClientSubmission:
    """Embedding-label pairs sent by one client; nothing else is exposed."""

    client_id: str
    vectors: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.vectors, dtype=float)
        y = np.asarray(self.labels, dtype=int).ravel()
        if X.size == 0 or len(y) == 0:
            raise EmptySubmission(f"client {self.client_id} submitted no samples")
        X = stats.as_points(X)
        if len(X) != len(y):
            raise ValueError(f"client {self.client_id}: {len(X)} vectors but {len(y)} labels")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "vectors", X)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def by_class(self) -> dict:
        return {int(c): self.vectors[self.labels == c] for c in np.unique(self.labels)}

    def digest(self) -> str:
        h = hashlib.sha256(self.client_id.encode())
        h.update(self.vectors.tobytes())
        h.update(self.labels.astype(np.int64).tobytes())
        return h.hexdigest()


@dataclass
class ClassDiagnostics:
    n_samples: int = 0
    n_outliers: int = 0
    mean_distance: float = 0.0
    client_mean_shift: float = 0.0
    suspicious_cluster_found: bool = False
    cluster_diagnostics: dict = field(default_factory=dict)


@dataclass
class AnomalyReport:
    client_id: str
    F: float
    M: float
    C: float
    S: float
    per_class: dict


def client_seed(experiment_seed: int, client_id: str) -> int:
    """Per-client seed, independent of evaluation order."""
    digest = hashlib.sha256(f"{experiment_seed}:{client_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _check(sub: ClientSubmission, ref: ReferenceModel) -> dict:
    if len(sub) == 0:
        raise EmptySubmission(f"client {sub.client_id} submitted no samples")
    if sub.dim != ref.dim:
        raise DimMismatch(f"client {sub.client_id} embeddings have dimension {sub.dim}, reference has {ref.dim}")
    groups = sub.by_class()
    for c in groups:
        if c not in ref.classes:
            raise UnknownClass(c)
    return groups


def outlier_fraction(sub: ClientSubmission, ref: ReferenceModel):
    """Return (F, {class: (n_samples, n_outliers, mean_distance)})."""
    groups = _check(sub, ref)
    counts = {}
    for c, pts in groups.items():
        d = ref[c].distances(pts)
        counts[c] = (len(pts), int(np.count_nonzero(d > ref[c].tau)), float(d.mean()))
    n = sum(v[0] for v in counts.values())
    outliers = sum(v[1] for v in counts.values())
    return outliers / n, counts


def mean_shift(sub: ClientSubmission, ref: ReferenceModel):
    """Return (M, {class: ||client mean - reference mean||}) over the classes present."""
    groups = _check(sub, ref)
    shifts = {c: float(np.linalg.norm(stats.mean_vector(pts) - ref[c].mu)) for c, pts in groups.items()}
    return float(np.mean([shifts[c] for c in sorted(shifts)])), shifts


def _rms_radius(points, center) -> float:
    return float(np.sqrt(np.mean(np.sum((points - center) ** 2, axis=1))))


def micro_cluster_score(sub: ClientSubmission, ref_data: dict, ref: ReferenceModel,
                        params: MicroClusterParams = MicroClusterParams(), seed: int = 0):
    """Return (C, {class: diagnostics}).

    Reference and client points of each class are pooled and split with
    2-means; C is the share of the client's samples that land in suspicious
    clusters.
    """
    groups = _check(sub, ref)
    diagnostics = {}
    flagged = 0
    for c in sorted(groups):
        client_pts = groups[c]
        diag = {"skipped": None, "clusters": []}
        diagnostics[c] = diag
        ref_pts = ref_data.get(c) if ref_data is not None else None
        if ref_pts is None or len(ref_pts) == 0:
            diag["skipped"] = "no reference data"
            continue
        ref_pts = stats.as_points(ref_pts)
        pooled = np.vstack([ref_pts, client_pts])
        if len(pooled) < 2:
            diag["skipped"] = "insufficient samples"
            continue
        cs = ref[c]
        ref_radius = _rms_radius(ref_pts, cs.mu)
        # mixing in the class id keeps classes from sharing k-means seeds
        result = stats.kmeans2(pooled, seed=[seed, c], restarts=params.restarts)
        is_client = np.arange(len(pooled)) >= len(ref_pts)
        for j in range(2):
            members = result.assignments == j
            size = int(members.sum())
            if size == 0:
                diag["clusters"].append({"size": 0, "suspicious": False})
                continue
            n_client = int(np.count_nonzero(members & is_client))
            purity = n_client / size
            radius = _rms_radius(pooled[members], result.centroids[j])
            centroid_dist = float(stats.mahalanobis(result.centroids[j], cs.mu, cs.sigma))
            conds = {
                "pure": purity >= params.purity_min,
                "compact": radius <= params.compact_ratio * ref_radius,
                "far": centroid_dist > params.centroid_factor * cs.tau,
            }
            suspicious = all(conds.values())
            if suspicious:
                flagged += n_client
            diag["clusters"].append({
                "size": size, "n_client": n_client, "purity": purity, "rms_radius": radius,
                "reference_rms_radius": ref_radius, "centroid_distance": centroid_dist,
                "conditions": conds, "suspicious": suspicious,
            })
    return flagged / len(sub), diagnostics


def suspicion_score(F: float, M: float, C: float, weights: MetricWeights = MetricWeights()) -> float:
    return weights.w_F * F ** weights.p + weights.w_M * M + weights.w_C * C


def evaluate_client(sub: ClientSubmission, ref: ReferenceModel, ref_data: dict | None,
                    weights: MetricWeights = MetricWeights(),
                    params: MicroClusterParams = MicroClusterParams(), seed: int = 0) -> AnomalyReport:
    """Full anomaly report for one client. ``seed`` is the experiment seed."""
    F, counts = outlier_fraction(sub, ref)
    M, shifts = mean_shift(sub, ref)
    C, clusters = micro_cluster_score(sub, ref_data, ref, params, client_seed(seed, sub.client_id))
    per_class = {}
    for c in sorted(counts):
        n, n_out, mean_d = counts[c]
        per_class[c] = ClassDiagnostics(
            n_samples=n, n_outliers=n_out, mean_distance=mean_d, client_mean_shift=shifts[c],
            suspicious_cluster_found=any(cl["suspicious"] for cl in clusters[c]["clusters"]),
            cluster_diagnostics=clusters[c],
        )
    return AnomalyReport(sub.client_id, F, M, C, suspicion_score(F, M, C, weights), per_class)
