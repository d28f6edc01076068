"""Experiment configuration: one versioned JSON document per experiment.

Every section maps onto a dataclass. Unknown keys are rejected and values
are validated before anything runs.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .aggregation import AggregationRule
from .auth import FlagPolicy
from .errors import ConfigError, UnsupportedVersion
from .metrics import MetricWeights, MicroClusterParams
from .reference import DEFAULT_PERCENTILE
from .sim import WorldConfig
from .stats import DEFAULT_SHRINKAGE

CONFIG_VERSION = 1


@dataclass(frozen=True)
class WorldSpec:
    n_clients: int = 50
    n_poisoned: int = 5
    dim: int = 16
    classes: tuple = (0, 1)
    samples_per_client: tuple = (100, 300)
    reference_size: int = 500
    test_size: int = 2000
    class_separation: float = 2.5
    class_std: float = 1.0


@dataclass(frozen=True)
class AttackSpec:
    """``trigger_alignment`` of None means a purely random direction; a
    number is the cosine between the trigger and the class-separation axis."""

    trigger_norm: float = 8.0
    trigger_alignment: float | None = None
    poison_fraction: float = 1.0

    def __post_init__(self):
        if self.trigger_norm <= 0:
            raise ValueError("trigger_norm must be positive")
        if not 0.0 < self.poison_fraction <= 1.0:
            raise ValueError(f"poison_fraction must lie in (0, 1], got {self.poison_fraction}")
        if self.trigger_alignment is not None and not -1.0 <= self.trigger_alignment <= 1.0:
            raise ValueError("trigger_alignment must lie in [-1, 1]")


@dataclass(frozen=True)
class ReferenceSpec:
    percentile: float = DEFAULT_PERCENTILE
    shrinkage: float = DEFAULT_SHRINKAGE

    def __post_init__(self):
        if not 0.0 < self.percentile < 100.0:
            raise ValueError("percentile must lie in (0, 100)")
        if not 0.0 <= self.shrinkage <= 1.0:
            raise ValueError("shrinkage must lie in [0, 1]")


@dataclass(frozen=True)
class TrainingSpec:
    epochs: int = 50
    learning_rate: float = 0.1

    def __post_init__(self):
        if self.epochs < 0 or self.learning_rate <= 0:
            raise ValueError("epochs must be >= 0 and learning_rate > 0")


@dataclass(frozen=True)
class AggregationSpec:
    rules: tuple = ("fedavg", "trimmed_mean", "krum")
    beta: float = 0.1
    f: int = 5

    def build(self) -> list:
        return [AggregationRule(kind, self.beta, self.f) for kind in self.rules]


@dataclass(frozen=True)
class ExperimentConfig:
    version: int = CONFIG_VERSION
    seed: int = 0
    rounds: int = 20
    out_dir: str = "out"
    policy: str = "largest_gap"
    auth_frequency: str = "per_round"
    workers: int = 1
    world: WorldSpec = field(default_factory=WorldSpec)
    attack: AttackSpec = field(default_factory=AttackSpec)
    weights: MetricWeights = field(default_factory=MetricWeights)
    micro_cluster: MicroClusterParams = field(default_factory=MicroClusterParams)
    aggregation: AggregationSpec = field(default_factory=AggregationSpec)
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    training: TrainingSpec = field(default_factory=TrainingSpec)

    def __post_init__(self):
        if self.version != CONFIG_VERSION:
            raise UnsupportedVersion(f"config version {self.version!r} is not supported (expected {CONFIG_VERSION})")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.auth_frequency not in ("per_round", "once"):
            raise ValueError("auth_frequency must be per_round or once")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        FlagPolicy.parse(self.policy)
        self.aggregation.build()
        self.world_config()

    def world_config(self) -> WorldConfig:
        return WorldConfig(seed=self.seed, **dataclasses.asdict(self.world))

    def flag_policy(self) -> FlagPolicy:
        return FlagPolicy.parse(self.policy)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(value, annotation, where):
    if isinstance(annotation, str) and annotation.startswith("tuple"):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {type(value).__name__}")
        return tuple(value)
    return value


def _build(cls, doc, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object, got {type(doc).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(doc) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    kwargs = {}
    for name, value in doc.items():
        f = known[name]
        sub = f.default_factory if f.default_factory is not dataclasses.MISSING else None
        if sub is not None and dataclasses.is_dataclass(sub):
            kwargs[name] = _build(sub, value, f"{where}.{name}")
        else:
            kwargs[name] = _coerce(value, f.type, f"{where}.{name}")
    try:
        return cls(**kwargs)
    except (UnsupportedVersion, ConfigError):
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if "version" not in doc:
        raise ConfigError("config is missing the 'version' field")
    if doc["version"] != CONFIG_VERSION:
        raise UnsupportedVersion(f"config version {doc['version']!r} is not supported (expected {CONFIG_VERSION})")
    return _build(ExperimentConfig, doc, "config")


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return config_from_dict(doc)


def with_overrides(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    """Apply command-line overrides; None values leave the field alone."""
    changes = {}
    try:
        for key, value in overrides.items():
            if value is None:
                continue
            if key == "poison_fraction":
                changes["attack"] = dataclasses.replace(cfg.attack, poison_fraction=value)
            elif key == "rule":
                changes["aggregation"] = dataclasses.replace(cfg.aggregation, rules=(value,))
            else:
                changes[key] = value
        return dataclasses.replace(cfg, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
