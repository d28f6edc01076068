"""The authentication server: ranks clients by suspicion, decides verdicts
and issues per-round verification tags to the clients judged authentic.

The server only ever receives ``ClientSubmission`` objects (embedding-label
pairs); model parameters never pass through it.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import DuplicateClient, EmptyInput
from .metrics import (AnomalyReport, ClientSubmission, MetricWeights, MicroClusterParams,
                      evaluate_client)
from .reference import ReferenceModel

AUTHENTIC = "Authentic"
SUSPICIOUS = "Suspicious"
GAP_FLOOR = 0.10

VERDICT_COLUMNS = ("round", "client_id", "F", "M", "C", "S", "rank", "status")


@dataclass(frozen=True)
class Verdict:
    client_id: str
    status: str
    score: float
    rank: int


@dataclass(frozen=True)
class VerificationTag:
    client_id: str
    round: int
    nonce: str
    valid: bool = True


@dataclass(frozen=True)
class FlagPolicy:
    """How ranked scores are cut into Suspicious / Authentic.

    ``mode`` is ``threshold`` (S > theta), ``largest_gap`` or ``topk``.
    """

    mode: str = "largest_gap"
    theta: float = 0.0
    k: int = 0

    MODES = ("threshold", "largest_gap", "topk")

    def __post_init__(self):
        if self.mode not in self.MODES:
            raise ValueError(f"unknown flag policy {self.mode!r}; expected one of {self.MODES}")
        if self.theta < 0:
            raise ValueError(f"threshold must be >= 0, got {self.theta}")
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")

    @classmethod
    def parse(cls, text: str) -> "FlagPolicy":
        """Parse ``largest_gap``, ``topk:5`` or ``threshold:0.5``."""
        name, _, arg = text.strip().partition(":")
        name = name.lower().replace("-", "_")
        if name == "largest_gap" and not arg:
            return cls("largest_gap")
        if name == "topk" and arg:
            return cls("topk", k=int(arg))
        if name in ("threshold", "fixed_threshold") and arg:
            return cls("threshold", theta=float(arg))
        raise ValueError(f"cannot parse flag policy {text!r}")

    def __str__(self):
        if self.mode == "topk":
            return f"topk:{self.k}"
        if self.mode == "threshold":
            return f"threshold:{self.theta!r}"
        return "largest_gap"


def rank_clients(reports) -> list:
    """Verdicts in descending S order (ties by ascending client_id), all Authentic."""
    reports = list(reports)
    if not reports:
        raise EmptyInput("no reports to rank")
    ids = [r.client_id for r in reports]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise DuplicateClient(f"duplicate client ids: {dupes}")
    ordered = sorted(reports, key=lambda r: (-r.S, r.client_id))
    return [Verdict(r.client_id, AUTHENTIC, r.S, i + 1) for i, r in enumerate(ordered)]


def largest_gap_cut(scores, floor: float = GAP_FLOOR) -> int:
    """Number of leading (descending) scores above the largest gap, or 0
    when no gap exceeds ``floor`` times the maximum score."""
    s = np.sort(np.asarray(scores, dtype=float))[::-1]
    if len(s) < 2:
        return 0
    gaps = s[:-1] - s[1:]
    i = int(np.argmax(gaps))
    if gaps[i] > floor * s[0]:
        return i + 1
    return 0


def decide_verdicts(ranked, policy: FlagPolicy = FlagPolicy()) -> list:
    ranked = sorted(ranked, key=lambda v: v.rank)
    if policy.mode == "threshold":
        flagged = {v.client_id for v in ranked if v.score > policy.theta}
    elif policy.mode == "topk":
        flagged = {v.client_id for v in ranked[:policy.k]}
    else:
        n = largest_gap_cut([v.score for v in ranked])
        flagged = {v.client_id for v in ranked[:n]}
    return [replace(v, status=SUSPICIOUS if v.client_id in flagged else AUTHENTIC) for v in ranked]


def issue_tags(verdicts, round: int, seed: int = 0) -> list:
    """One tag per Authentic client. Nonces come from a generator keyed on
    (seed, round), drawn in client_id order, so repeat calls agree."""
    if round < 0:
        raise ValueError("round must be >= 0")
    rng = np.random.default_rng([seed, round])
    authentic = sorted(v.client_id for v in verdicts if v.status == AUTHENTIC)
    return [VerificationTag(cid, round, rng.bytes(16).hex()) for cid in authentic]


def format_verdicts(round: int, reports, verdicts) -> str:
    """The per-round verdict report, one row per client in rank order."""
    by_id = {r.client_id: r for r in reports}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(VERDICT_COLUMNS)
    for v in sorted(verdicts, key=lambda v: v.rank):
        r = by_id[v.client_id]
        w.writerow([round, v.client_id, repr(r.F), repr(r.M), repr(r.C), repr(r.S), v.rank, v.status])
    return buf.getvalue()


@dataclass
class AuthResult:
    round: int
    reports: list
    verdicts: list
    tags: list

    @property
    def authenticated(self) -> set:
        return {t.client_id for t in self.tags}


class AuthenticationServer:
    """Holds the golden reference and judges client submissions.

    Reports are cached per submission digest: a client resubmitting the
    same embeddings gets the identical report without recomputation.
    """

    def __init__(self, reference: ReferenceModel, ref_data: dict | None = None,
                 weights: MetricWeights = MetricWeights(),
                 params: MicroClusterParams = MicroClusterParams(),
                 policy: FlagPolicy = FlagPolicy(), seed: int = 0, workers: int = 1):
        self.reference = reference
        self.ref_data = ref_data
        self.weights = weights
        self.params = params
        self.policy = policy
        self.seed = seed
        self.workers = workers
        self._cache = {}

    def _evaluate_one(self, sub: ClientSubmission) -> AnomalyReport:
        key = sub.digest()
        report = self._cache.get(key)
        if report is None:
            report = evaluate_client(sub, self.reference, self.ref_data, self.weights, self.params, self.seed)
            self._cache[key] = report
        return report

    def evaluate(self, submissions) -> list:
        subs = sorted(submissions, key=lambda s: s.client_id)
        ids = [s.client_id for s in subs]
        if len(set(ids)) != len(ids):
            raise DuplicateClient("duplicate client ids in submissions")
        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                return list(pool.map(self._evaluate_one, subs))
        return [self._evaluate_one(s) for s in subs]

    def authenticate(self, submissions, round: int = 0) -> AuthResult:
        reports = self.evaluate(submissions)
        verdicts = decide_verdicts(rank_clients(reports), self.policy)
        tags = issue_tags(verdicts, round, self.seed)
        return AuthResult(round, reports, verdicts, tags)
