"""Simulation engine for the three-entity topology.

Synthetic class-conditional Gaussians stand in for encoder embeddings:
a client's data vectors *are* its embeddings. Local models are softmax
regressions trained by full-batch gradient descent.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import aggregation
from .aggregation import AggregationRule, ModelUpdate
from .auth import AuthenticationServer, format_verdicts, issue_tags
from .errors import EmptyDataset, UnknownClient
from .metrics import ClientSubmission, client_seed

EVENT_TYPES = ("round_start", "verdict", "tag_issued", "update_received", "aggregated", "accuracy")


@dataclass(frozen=True)
class WorldConfig:
    n_clients: int = 50
    n_poisoned: int = 5
    dim: int = 16
    classes: tuple = (0, 1)
    samples_per_client: tuple = (100, 300)
    reference_size: int = 500
    test_size: int = 2000
    class_separation: float = 2.5
    class_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(int(c) for c in self.classes))
        object.__setattr__(self, "samples_per_client", tuple(int(s) for s in self.samples_per_client))
        lo, hi = self.samples_per_client
        if min(self.n_clients, self.dim, self.reference_size, self.test_size, lo) < 1:
            raise ValueError("counts in WorldConfig must be positive")
        if lo > hi:
            raise ValueError(f"samples_per_client range is empty: {self.samples_per_client}")
        if not 0 <= self.n_poisoned <= self.n_clients:
            raise ValueError(f"n_poisoned must lie in [0, n_clients], got {self.n_poisoned}")
        if len(set(self.classes)) != len(self.classes) or len(self.classes) < 2:
            raise ValueError("need at least two distinct classes")
        if len(self.classes) > self.dim:
            raise ValueError("cannot place more classes than dimensions")
        if self.class_separation <= 0 or self.class_std <= 0:
            raise ValueError("class_separation and class_std must be positive")

    @property
    def client_ids(self) -> list:
        width = max(2, len(str(self.n_clients - 1)))
        return [f"c{i:0{width}d}" for i in range(self.n_clients)]


@dataclass(frozen=True, eq=False)
class ClassGenerator:
    """Clean data-generating process: one diagonal Gaussian per class."""

    classes: tuple
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        if len({tuple(m) for m in np.asarray(self.means)}) != len(self.classes):
            raise ValueError("class means must be pairwise distinct")

    @classmethod
    def from_config(cls, cfg: WorldConfig, rng: np.random.Generator) -> "ClassGenerator":
        # orthonormal directions scaled so every pair of means is class_separation apart
        q, _ = np.linalg.qr(rng.standard_normal((cfg.dim, len(cfg.classes))))
        means = (cfg.class_separation / math.sqrt(2)) * q.T
        stds = np.full((len(cfg.classes), cfg.dim), cfg.class_std)
        return cls(cfg.classes, means, stds)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def sample(self, labels, rng: np.random.Generator) -> np.ndarray:
        idx = np.searchsorted(self.classes, labels)
        noise = rng.standard_normal((len(labels), self.dim))
        return self.means[idx] + noise * self.stds[idx]

    def separation_axis(self) -> np.ndarray:
        """Unit vector from the first to the last class mean."""
        v = self.means[-1] - self.means[0]
        return v / np.linalg.norm(v)


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.y)


@dataclass(frozen=True, eq=False)
class World:
    config: WorldConfig
    generator: ClassGenerator
    reference: Dataset
    clients: dict
    test: Dataset
    poisoned_ids: tuple

    @property
    def classes(self) -> tuple:
        return self.config.classes

    def reference_by_class(self) -> dict:
        return {c: self.reference.X[self.reference.y == c] for c in self.classes}

    def pooled(self, datasets=None) -> Dataset:
        datasets = self.clients if datasets is None else datasets
        ids = sorted(datasets)
        return Dataset(np.vstack([datasets[i].X for i in ids]), np.concatenate([datasets[i].y for i in ids]))


def _streams(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def gen_world(cfg: WorldConfig, generator: ClassGenerator | None = None) -> World:
    """Reference set, per-client datasets and a held-out test set, all seeded.

    Client sizes are uniform over ``samples_per_client`` (inclusive); labels
    are uniform over the classes. The poisoned client ids are drawn here too
    so that clean and attacked runs share one world.
    """
    gen_rng, size_rng, client_rng, ref_rng, test_rng, pick_rng = _streams(cfg.seed, 6)
    if generator is None:
        generator = ClassGenerator.from_config(cfg, gen_rng)
    classes = np.array(cfg.classes)

    ref_y = np.repeat(classes, cfg.reference_size)
    reference = Dataset(generator.sample(ref_y, ref_rng), ref_y)

    test_y = classes[np.arange(cfg.test_size) % len(classes)]
    test = Dataset(generator.sample(test_y, test_rng), test_y)

    lo, hi = cfg.samples_per_client
    sizes = size_rng.integers(lo, hi + 1, size=cfg.n_clients)
    clients = {}
    for cid, n in zip(cfg.client_ids, sizes):
        y = client_rng.choice(classes, size=int(n))
        clients[cid] = Dataset(generator.sample(y, client_rng), y)

    poisoned = tuple(sorted(pick_rng.choice(cfg.client_ids, size=cfg.n_poisoned, replace=False).tolist()))
    return World(cfg, generator, reference, clients, test, poisoned)


@dataclass(frozen=True, eq=False)
class AttackConfig:
    """Trigger poisoning: ``poison_fraction`` of each compromised client's
    samples get ``trigger`` added; labels are kept."""

    trigger: np.ndarray
    poison_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        t = np.asarray(self.trigger, dtype=float).ravel()
        if not np.all(np.isfinite(t)) or np.linalg.norm(t) == 0:
            raise ValueError("trigger must be a finite, nonzero displacement")
        if not 0.0 < self.poison_fraction <= 1.0:
            raise ValueError(f"poison_fraction must lie in (0, 1], got {self.poison_fraction}")
        object.__setattr__(self, "trigger", t)


def make_trigger(dim: int, norm: float = 8.0, seed: int = 0, axis=None, alignment: float | None = None):
    """Displacement of length ``norm`` along a seeded random direction.

    With ``axis`` and ``alignment`` given, the direction has cosine
    ``alignment`` with ``axis`` and the remainder is random and orthogonal.
    """
    rng = np.random.default_rng([seed, 0x7719])
    v = rng.standard_normal(dim)
    if alignment is None:
        return norm * v / np.linalg.norm(v)
    if not -1.0 <= alignment <= 1.0:
        raise ValueError("alignment must lie in [-1, 1]")
    u = np.asarray(axis, dtype=float)
    u = u / np.linalg.norm(u)
    v = v - (v @ u) * u
    v /= np.linalg.norm(v)
    return norm * (alignment * u + math.sqrt(1.0 - alignment ** 2) * v)


def apply_attack(datasets: dict, attack: AttackConfig, poisoned_ids) -> dict:
    """Copy of ``datasets`` with the trigger applied to the poisoned clients."""
    out = dict(datasets)
    for cid in sorted(poisoned_ids):
        if cid not in datasets:
            raise UnknownClient(f"unknown client id {cid!r}")
        ds = datasets[cid]
        if ds.X.shape[1] != attack.trigger.shape[0]:
            raise ValueError(f"trigger has dimension {attack.trigger.shape[0]}, data has {ds.X.shape[1]}")
        n = len(ds)
        k = n if attack.poison_fraction >= 1.0 else int(round(attack.poison_fraction * n))
        rng = np.random.default_rng(client_seed(attack.seed, cid))
        idx = np.sort(rng.choice(n, size=k, replace=False))
        X = ds.X.copy()
        X[idx] += attack.trigger
        out[cid] = Dataset(X, ds.y.copy())
    return out


# -- local model ----------------------------------------------------------------

def n_params(n_classes: int, dim: int) -> int:
    return n_classes * (dim + 1)


def unpack(params, n_classes: int, dim: int):
    params = np.asarray(params, dtype=float)
    if params.shape != (n_params(n_classes, dim),):
        raise ValueError(f"expected {n_params(n_classes, dim)} parameters, got {params.shape}")
    return params[: n_classes * dim].reshape(n_classes, dim), params[n_classes * dim:]


def pack(W, b) -> np.ndarray:
    return np.concatenate([np.ravel(W), np.ravel(b)])


def loss_and_grad(params, X, y_idx, n_classes: int):
    """Mean softmax cross-entropy and its gradient with respect to the flat params."""
    n, d = X.shape
    W, b = unpack(params, n_classes, d)
    logits = X @ W.T + b
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(n), y_idx].mean()
    delta = np.exp(log_probs)
    delta[np.arange(n), y_idx] -= 1.0
    delta /= n
    return float(loss), pack(delta.T @ X, delta.sum(axis=0))


def predict(params, X, classes) -> np.ndarray:
    W, b = unpack(params, len(classes), X.shape[1])
    return np.asarray(classes)[np.argmax(X @ W.T + b, axis=1)]


def accuracy(params, data: Dataset, classes) -> float:
    return float(np.mean(predict(params, data.X, classes) == data.y))


def local_train(params, data: Dataset, classes, epochs: int = 50, learning_rate: float = 0.1,
                client_id: str = "") -> tuple:
    """Full-batch gradient descent from ``params``.

    Returns ``(ModelUpdate, final_loss)``.
    """
    if len(data) == 0:
        raise EmptyDataset(f"client {client_id!r} has no data")
    y_idx = np.searchsorted(classes, data.y)
    w = np.array(params, dtype=float)
    for _ in range(epochs):
        _, g = loss_and_grad(w, data.X, y_idx, len(classes))
        w -= learning_rate * g
    loss, _ = loss_and_grad(w, data.X, y_idx, len(classes))
    return ModelUpdate(client_id, w, len(data)), loss


def centralized_train(data: Dataset, classes, epochs: int, learning_rate: float = 0.1) -> np.ndarray:
    """Single-site baseline: gradient descent on pooled data from zeros."""
    init = np.zeros(n_params(len(classes), data.X.shape[1]))
    update, _ = local_train(init, data, classes, epochs, learning_rate)
    return update.params


# -- rounds -------------------------------------------------------------------------

@dataclass
class RoundRecord:
    round: int
    verdicts: list | None
    participants: list
    params: np.ndarray
    accuracy: float
    local_losses: dict
    aborted: str | None = None


@dataclass
class SimulationResult:
    records: list
    events: list
    verdict_reports: dict = field(default_factory=dict)
    first_reports: list | None = None

    @property
    def final_accuracy(self) -> float:
        return self.records[-1].accuracy

    def event_log(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)

    def write(self, out_dir, prefix: str = "") -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{prefix}events.jsonl").write_text(self.event_log())
        for r, text in sorted(self.verdict_reports.items()):
            (out / f"{prefix}verdicts_round_{r:03d}.csv").write_text(text)


class Simulation:
    """Central server loop: authenticate, train tagged clients, aggregate, evaluate.

    ``datasets`` are the clients' (possibly poisoned) local datasets. When
    ``auth`` is None every client participates.
    """

    def __init__(self, world: World, datasets: dict, rule: AggregationRule = AggregationRule(),
                 auth: AuthenticationServer | None = None, epochs: int = 50, learning_rate: float = 0.1,
                 auth_frequency: str = "per_round", workers: int = 1):
        if auth_frequency not in ("per_round", "once"):
            raise ValueError(f"auth_frequency must be per_round or once, got {auth_frequency!r}")
        self.world = world
        self.datasets = datasets
        self.rule = rule
        self.auth = auth
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.auth_frequency = auth_frequency
        self.workers = workers
        self.classes = np.array(world.classes)
        self.params = np.zeros(n_params(len(self.classes), world.config.dim))
        self.events = []
        self.verdict_reports = {}
        self.first_reports = None
        self._verdicts = None

    def _emit(self, type_, round_, **fields):
        self.events.append({"type": type_, "round": round_, **fields})

    def _authenticate(self, r: int):
        subs = [ClientSubmission(cid, ds.X, ds.y) for cid, ds in sorted(self.datasets.items())]
        if self._verdicts is None or self.auth_frequency == "per_round":
            result = self.auth.authenticate(subs, r)
            verdicts, tags, reports = result.verdicts, result.tags, result.reports
            self._verdicts, self._reports = verdicts, reports
            if self.first_reports is None:
                self.first_reports = reports
        else:
            verdicts, reports = self._verdicts, self._reports
            tags = issue_tags(verdicts, r, self.auth.seed)
        by_id = {rep.client_id: rep for rep in reports}
        for v in verdicts:
            rep = by_id[v.client_id]
            self._emit("verdict", r, client_id=v.client_id, F=rep.F, M=rep.M, C=rep.C, S=rep.S,
                       rank=v.rank, status=v.status)
        for t in tags:
            self._emit("tag_issued", r, client_id=t.client_id, nonce=t.nonce)
        self.verdict_reports[r] = format_verdicts(r, reports, verdicts)
        return verdicts, {(t.client_id, t.round) for t in tags}

    def _train(self, cid):
        return local_train(self.params, self.datasets[cid], self.classes, self.epochs,
                           self.learning_rate, client_id=cid)

    def run_round(self, r: int) -> RoundRecord:
        self._emit("round_start", r, n_clients=len(self.datasets))
        verdicts = None
        if self.auth is not None:
            verdicts, tags = self._authenticate(r)
            # the central server only accepts updates carrying a tag for this round
            participants = [cid for cid in sorted(self.datasets) if (cid, r) in tags]
        else:
            participants = sorted(self.datasets)

        if not participants:
            self._emit("aggregated", r, n_updates=0, aborted="NoParticipants")
            acc = accuracy(self.params, self.world.test, self.classes)
            self._emit("accuracy", r, accuracy=acc)
            return RoundRecord(r, verdicts, [], self.params.copy(), acc, {}, aborted="NoParticipants")

        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                results = list(pool.map(self._train, participants))
        else:
            results = [self._train(cid) for cid in participants]
        updates, losses = [], {}
        for cid, (update, loss) in zip(participants, results):
            updates.append(update)
            losses[cid] = loss
            self._emit("update_received", r, client_id=cid, n_samples=update.n_samples, local_loss=loss)

        self.params = aggregation.aggregate(updates, self.rule)
        self._emit("aggregated", r, n_updates=len(updates), rule=self.rule.label,
                   param_norm=float(np.linalg.norm(self.params)))
        acc = accuracy(self.params, self.world.test, self.classes)
        self._emit("accuracy", r, accuracy=acc)
        return RoundRecord(r, verdicts, participants, self.params.copy(), acc, losses)

    def run(self, rounds: int) -> SimulationResult:
        records = [self.run_round(r) for r in range(rounds)]
        return SimulationResult(records, self.events, self.verdict_reports, self.first_reports)


def run_simulation(world: World, datasets: dict | None = None, rule: AggregationRule = AggregationRule(),
                   auth: AuthenticationServer | None = None, rounds: int = 20, epochs: int = 50,
                   learning_rate: float = 0.1, auth_frequency: str = "per_round",
                   workers: int = 1) -> SimulationResult:
    datasets = world.clients if datasets is None else datasets
    sim = Simulation(world, datasets, rule, auth, epochs, learning_rate, auth_frequency, workers)
    return sim.run(rounds)
