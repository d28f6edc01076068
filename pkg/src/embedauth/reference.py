"""Golden reference distribution: per-class mean, shrunk covariance and
Mahalanobis threshold, plus the embedding and model file formats."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import stats
from .errors import DimMismatch, EmptyInput, MissingClass, ParseError, UnsupportedVersion

MODEL_FORMAT_VERSION = 1
DEFAULT_PERCENTILE = 99.0


class LabeledEmbedding(NamedTuple):
    vector: np.ndarray
    label: int


def canonical_order(points: np.ndarray) -> np.ndarray:
    """Row indices sorting points lexicographically by coordinate.

    Statistics are accumulated in this order so that they do not depend on
    how the caller happened to order its samples.
    """
    if len(points) == 0:
        return np.arange(0)
    return np.lexsort(points.T[::-1])


@dataclass(frozen=True, eq=False)
class ClassStats:
    class_id: int
    mu: np.ndarray
    sigma: stats.CovMatrix
    tau: float
    percentile_used: float
    n_ref: int

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def distances(self, points) -> np.ndarray:
        return np.atleast_1d(stats.mahalanobis(np.atleast_2d(points), self.mu, self.sigma))

    def __eq__(self, other):
        if not isinstance(other, ClassStats):
            return NotImplemented
        return (
            self.class_id == other.class_id
            and self.tau == other.tau
            and self.percentile_used == other.percentile_used
            and self.n_ref == other.n_ref
            and self.sigma.shrinkage == other.sigma.shrinkage
            and np.array_equal(self.mu, other.mu)
            and np.array_equal(self.sigma.matrix, other.sigma.matrix)
        )


def build_class_stats(points, q: float = DEFAULT_PERCENTILE,
                      shrinkage: float = stats.DEFAULT_SHRINKAGE, class_id: int = 0) -> ClassStats:
    pts = stats.as_points(points)
    if pts.shape[0] == 0:
        raise stats.EmptyClass(f"class {class_id} is empty")
    if pts.shape[0] < 2:
        raise stats.InsufficientSamples(f"class {class_id} has {pts.shape[0]} sample(s), need at least 2")
    pts = pts[canonical_order(pts)]
    mu = stats.mean_vector(pts)
    sigma = stats.covariance_shrunk(pts, shrinkage)
    dists = stats.mahalanobis(pts, mu, sigma)
    tau = stats.percentile(dists, q)
    mu.setflags(write=False)
    return ClassStats(int(class_id), mu, sigma, tau, float(q), int(pts.shape[0]))


@dataclass(frozen=True, eq=False)
class ReferenceModel:
    dim: int
    classes: dict
    percentile: float
    shrinkage: float
    created_from: str

    @property
    def class_ids(self) -> list:
        return sorted(self.classes)

    def __getitem__(self, class_id) -> ClassStats:
        return self.classes[class_id]

    def __eq__(self, other):
        if not isinstance(other, ReferenceModel):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.percentile == other.percentile
            and self.shrinkage == other.shrinkage
            and self.created_from == other.created_from
            and self.class_ids == other.class_ids
            and all(self.classes[c] == other.classes[c] for c in self.class_ids)
        )


def fingerprint(vectors, labels) -> str:
    """SHA-256 of the dataset rendered in canonical (label, coordinate) order."""
    X = stats.as_points(vectors)
    y = np.asarray(labels, dtype=int)
    order = np.lexsort(np.column_stack([y, X]).T[::-1]) if len(X) else np.arange(0)
    h = hashlib.sha256()
    h.update(f"d={X.shape[1] if X.ndim == 2 else 0}\n".encode())
    for i in order:
        h.update((str(int(y[i])) + "," + ",".join(repr(float(v)) for v in X[i]) + "\n").encode())
    return h.hexdigest()


def split_by_class(vectors, labels, classes) -> dict:
    X = stats.as_points(vectors)
    y = np.asarray(labels, dtype=int)
    return {c: X[y == c] for c in classes}


def build_reference_model(vectors, labels, classes=None, q: float = DEFAULT_PERCENTILE,
                          shrinkage: float = stats.DEFAULT_SHRINKAGE) -> ReferenceModel:
    """One ClassStats per declared class (defaults to the labels present)."""
    X = stats.as_points(vectors)
    y = np.asarray(labels, dtype=int)
    if len(X) != len(y):
        raise ValueError(f"{len(X)} vectors but {len(y)} labels")
    if classes is None:
        classes = sorted(set(y.tolist()))
    per_class = {}
    for c in sorted(classes):
        pts = X[y == c]
        if len(pts) == 0:
            raise MissingClass(c)
        per_class[int(c)] = build_class_stats(pts, q, shrinkage, class_id=c)
    return ReferenceModel(X.shape[1], per_class, float(q), float(shrinkage), fingerprint(X, y))


# -- persistence --------------------------------------------------------------

def model_to_dict(model: ReferenceModel) -> dict:
    return {
        "version": MODEL_FORMAT_VERSION,
        "dim": model.dim,
        "percentile": model.percentile,
        "shrinkage": model.shrinkage,
        "created_from": model.created_from,
        "classes": [
            {
                "class_id": cs.class_id,
                "n_ref": cs.n_ref,
                "percentile_used": cs.percentile_used,
                "tau": cs.tau,
                "mu": cs.mu.tolist(),
                "sigma": cs.sigma.matrix.tolist(),
            }
            for cs in (model.classes[c] for c in model.class_ids)
        ],
    }


def model_from_dict(doc: dict) -> ReferenceModel:
    if not isinstance(doc, dict):
        raise ParseError("reference model must be a JSON object")
    version = doc.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise UnsupportedVersion(f"reference model version {version!r} is not supported (expected 1)")
    try:
        shrinkage = float(doc["shrinkage"])
        classes = {}
        for entry in doc["classes"]:
            sigma = stats.CovMatrix(np.array(entry["sigma"], dtype=float), shrinkage)
            mu = np.array(entry["mu"], dtype=float)
            mu.setflags(write=False)
            cs = ClassStats(int(entry["class_id"]), mu, sigma, float(entry["tau"]),
                            float(entry["percentile_used"]), int(entry["n_ref"]))
            classes[cs.class_id] = cs
        model = ReferenceModel(int(doc["dim"]), classes, float(doc["percentile"]), shrinkage,
                               str(doc["created_from"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, stats.SingularCovariance):
            raise
        raise ParseError(f"malformed reference model: {exc!r}") from exc
    for cs in classes.values():
        if cs.dim != model.dim:
            raise ParseError(f"class {cs.class_id} has dimension {cs.dim}, model declares {model.dim}")
    return model


def save_reference_model(model: ReferenceModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def load_reference_model(path) -> ReferenceModel:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return model_from_dict(doc)


# -- embedding files ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    """Rows of (client_id, label, vector) as read from an embedding file."""

    client_ids: list
    labels: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.client_ids)

    def by_client(self) -> dict:
        """client_id -> (vectors, labels), preserving file order within a client."""
        out = {}
        ids = np.array(self.client_ids, dtype=object)
        for cid in sorted(set(self.client_ids)):
            mask = ids == cid
            out[cid] = (self.vectors[mask], self.labels[mask])
        return out


def format_embeddings(client_ids, labels, vectors) -> str:
    X = stats.as_points(vectors)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["client_id", "label"] + [f"x{j}" for j in range(X.shape[1])])
    for cid, lab, row in zip(client_ids, labels, X):
        w.writerow([cid, int(lab)] + [repr(float(v)) for v in row])
    return buf.getvalue()


def write_embeddings(path, client_ids, labels, vectors) -> None:
    Path(path).write_text(format_embeddings(client_ids, labels, vectors))


def parse_embeddings(text: str, source: str = "<embeddings>") -> EmbeddingTable:
    """Parse the delimited embedding format.

    The header is ``client_id,label,x0,...,x{d-1}``; its length declares d.
    """
    rows = csv.reader(io.StringIO(text))
    try:
        header = next(rows)
    except StopIteration:
        raise EmptyInput(f"{source}: file is empty") from None
    if len(header) < 3 or header[0] != "client_id" or header[1] != "label":
        raise ParseError(f"{source}: line 1: header must start with client_id,label and declare at least one component")
    d = len(header) - 2
    ids, labels, vecs = [], [], []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != d + 2:
            raise ParseError(f"{source}: line {lineno}: expected {d + 2} columns, got {len(row)}")
        try:
            label = int(row[1])
            vec = [float(v) for v in row[2:]]
        except ValueError as exc:
            raise ParseError(f"{source}: line {lineno}: {exc}") from None
        if not all(np.isfinite(vec)):
            raise ParseError(f"{source}: line {lineno}: non-finite component")
        ids.append(row[0])
        labels.append(label)
        vecs.append(vec)
    if not ids:
        raise EmptyInput(f"{source}: no data rows")
    return EmbeddingTable(ids, np.array(labels, dtype=int), np.array(vecs, dtype=float).reshape(len(ids), d))


def read_embeddings(path) -> EmbeddingTable:
    return parse_embeddings(Path(path).read_text(), source=str(path))


def check_dim(model: ReferenceModel, dim: int, what: str = "embeddings") -> None:
    if dim != model.dim:
        raise DimMismatch(f"{what} have dimension {dim}, reference model has {model.dim}")
