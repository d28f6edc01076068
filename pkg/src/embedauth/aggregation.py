"""FedAvg, coordinate-wise trimmed mean and Krum over flat parameter vectors.

Updates are always processed in ascending client_id order, which makes
every rule invariant to the order the updates arrived in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyRound, TooFewClients


@dataclass(frozen=True, eq=False)
class ModelUpdate:
    client_id: str
    params: np.ndarray
    n_samples: int

    def __post_init__(self):
        p = np.asarray(self.params, dtype=float).ravel()
        if self.n_samples < 1:
            raise ValueError(f"client {self.client_id}: n_samples must be >= 1")
        object.__setattr__(self, "params", p)


@dataclass(frozen=True)
class AggregationRule:
    """``kind`` is one of fedavg, trimmed_mean, krum."""

    kind: str = "fedavg"
    beta: float = 0.1
    f: int = 5

    KINDS = ("fedavg", "trimmed_mean", "krum")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown aggregation rule {self.kind!r}; expected one of {self.KINDS}")
        if not 0.0 <= self.beta < 0.5:
            raise ValueError(f"trimmed-mean beta must lie in [0, 0.5), got {self.beta}")
        if self.f < 0:
            raise ValueError(f"krum f must be >= 0, got {self.f}")

    @property
    def label(self) -> str:
        if self.kind == "trimmed_mean":
            return f"trimmed_mean(beta={self.beta})"
        if self.kind == "krum":
            return f"krum(f={self.f})"
        return "fedavg"


def _stack(updates):
    if not updates:
        raise EmptyRound("no updates to aggregate")
    ordered = sorted(updates, key=lambda u: u.client_id)
    sizes = {u.params.shape for u in ordered}
    if len(sizes) != 1:
        raise ValueError(f"updates disagree on parameter count: {sorted(sizes)}")
    return ordered, np.vstack([u.params for u in ordered])


def fedavg(updates) -> np.ndarray:
    ordered, P = _stack(updates)
    n = np.array([u.n_samples for u in ordered], dtype=float)
    return (n / n.sum()) @ P


def trimmed_mean(updates, beta: float = 0.1) -> np.ndarray:
    """Drop the floor(beta*n) largest and smallest values per coordinate, average the rest."""
    _, P = _stack(updates)
    n = len(P)
    m = math.floor(beta * n)
    if n <= 2 * m:
        raise TooFewClients(f"trimmed mean with beta={beta} needs more than {2 * m} clients, got {n}")
    return np.sort(P, axis=0)[m:n - m].mean(axis=0)


def krum_scores(P: np.ndarray, f: int) -> np.ndarray:
    n = len(P)
    d2 = ((P[:, None, :] - P[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    k = n - f - 2
    return np.sort(d2, axis=1)[:, :k].sum(axis=1)


def krum(updates, f: int) -> np.ndarray:
    """Params of the update with the smallest summed squared distance to its
    n - f - 2 nearest neighbours; ties go to the lowest client_id."""
    ordered, P = _stack(updates)
    n = len(P)
    if n < 2 * f + 3:
        raise TooFewClients(f"krum with f={f} needs at least {2 * f + 3} clients, got {n}")
    scores = krum_scores(P, f)
    return ordered[int(np.argmin(scores))].params.copy()


def aggregate(updates, rule: AggregationRule) -> np.ndarray:
    if rule.kind == "fedavg":
        return fedavg(updates)
    if rule.kind == "trimmed_mean":
        return trimmed_mean(updates, rule.beta)
    return krum(updates, rule.f)
