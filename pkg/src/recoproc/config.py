"""Declarative experiment configuration (JSON, versioned, strict keys)."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional

from .degradations import DegradationSpec
from .errors import ConfigError, InvalidParam, InvalidSpec, NotFound
from .models import ProcessorSpec, RecognizerSpec, TransformerSpec
from .objectives import SUPERVISED, UNSUPERVISED, RecognitionLossSpec

SCHEMA_VERSION = 1

MODES = ("plain", "ra", "ra_unsupervised", "ra_transformer", "recog_only", "joint_finetune_r")
NEEDS_RECOGNIZER = frozenset(MODES) - {"plain"}
DEFAULT_LAMBDA = {
    "plain": 0.0,
    "ra": 1e-3,
    "ra_transformer": 1e-2,
    "ra_unsupervised": 10.0,
    "recog_only": 1e-3,
    "joint_finetune_r": 1e-3,
}


@dataclass
class OptimizerSchedule:
    """Adam schedule for P and T; lr is divided by ``decay_factor`` at each decay epoch."""

    lr0: float = 1e-4
    epochs: int = 6
    decay_epochs: List[int] = field(default_factory=lambda: [5, 6])
    decay_factor: float = 10.0
    batch_size: int = 20

    def validate(self):
        if self.lr0 <= 0 or self.decay_factor <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ConfigError(f"invalid schedule {self}")


@dataclass
class RecognizerSchedule:
    epochs: int = 12
    lr: float = 2e-3
    batch_size: int = 64
    weight_decay: float = 0.0

    def validate(self):
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0 or self.weight_decay < 0:
            raise ConfigError(f"invalid recognizer schedule {self}")


@dataclass
class FinetuneSchedule:
    """SGD-with-momentum settings for R in ``joint_finetune_r``."""

    lr: float = 1e-3
    momentum: float = 0.9

    def validate(self):
        if self.lr <= 0 or not 0 <= self.momentum < 1:
            raise ConfigError(f"invalid finetune schedule {self}")


@dataclass
class DatasetConfig:
    root: Optional[str] = None
    train_split: str = "train"
    val_split: str = "val"
    max_train: Optional[int] = None
    max_val: Optional[int] = None

    def validate(self):
        pass


def lr_at(schedule: OptimizerSchedule, epoch: int) -> float:
    """Learning rate for 1-based ``epoch``."""
    n = sum(1 for d in schedule.decay_epochs if d <= epoch)
    return schedule.lr0 / schedule.decay_factor**n


def _strict(cls, d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object, got {type(d).__name__}")
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    return cls(**d)


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    task: dict = field(default_factory=lambda: {"kind": "super_resolution", "scale": 4})
    mode: str = "plain"
    lam: Optional[float] = None
    distance: str = "l2_probs"
    processor: dict = field(default_factory=dict)
    transformer: dict = field(default_factory=dict)
    recognizer: dict = field(default_factory=dict)
    schedule: OptimizerSchedule = field(default_factory=OptimizerSchedule)
    recognizer_schedule: RecognizerSchedule = field(default_factory=RecognizerSchedule)
    finetune: FinetuneSchedule = field(default_factory=FinetuneSchedule)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    seeds: List[int] = field(default_factory=lambda: [0])
    degradation_seed: int = 0
    deterministic: bool = True
    recognizer_checkpoint: Optional[str] = None
    eval_with_transformer: bool = True
    output_dir: str = "results"

    _SECTIONS = {
        "schedule": OptimizerSchedule,
        "recognizer_schedule": RecognizerSchedule,
        "finetune": FinetuneSchedule,
        "dataset": DatasetConfig,
    }

    def __post_init__(self):
        for name, section in self._SECTIONS.items():
            value = getattr(self, name)
            if isinstance(value, dict):
                setattr(self, name, _strict(section, value, name))
        self.seeds = list(self.seeds)

    # -- derived views -------------------------------------------------
    @property
    def seed(self) -> int:
        return int(self.seeds[0])

    def task_spec(self) -> DegradationSpec:
        try:
            return DegradationSpec.from_dict(self.task)
        except InvalidParam as exc:
            raise ConfigError(f"task: {exc}") from exc

    def resolved_lambda(self) -> float:
        return DEFAULT_LAMBDA[self.mode] if self.lam is None else float(self.lam)

    def loss_spec(self) -> RecognitionLossSpec:
        if self.mode == "ra_unsupervised":
            return RecognitionLossSpec(UNSUPERVISED, self.distance, self.resolved_lambda())
        return RecognitionLossSpec(SUPERVISED, None, self.resolved_lambda())

    def processor_spec(self) -> ProcessorSpec:
        d = {"upscale": self.task_spec().upscale, **self.processor}
        try:
            spec = ProcessorSpec(**d)
        except (TypeError, InvalidSpec) as exc:
            raise ConfigError(f"processor: {exc}") from exc
        if spec.upscale != self.task_spec().upscale:
            raise ConfigError(f"processor upscale {spec.upscale} does not fit task {self.task_spec().kind}")
        return spec

    def transformer_spec(self) -> TransformerSpec:
        try:
            return TransformerSpec(**self.transformer)
        except (TypeError, InvalidSpec) as exc:
            raise ConfigError(f"transformer: {exc}") from exc

    def recognizer_spec(self, **overrides) -> RecognizerSpec:
        try:
            return RecognizerSpec(**{**self.recognizer, **overrides})
        except (TypeError, InvalidSpec) as exc:
            raise ConfigError(f"recognizer: {exc}") from exc

    # -- validation / serialisation -------------------------------------
    def validate(self) -> "ExperimentConfig":
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not self.seeds or not all(isinstance(s, int) for s in self.seeds):
            raise ConfigError("seeds must be a non-empty list of integers")
        try:
            self.loss_spec()
        except InvalidParam as exc:
            raise ConfigError(str(exc)) from exc
        self.task_spec()
        self.processor_spec()
        self.transformer_spec()
        self.recognizer_spec()
        for name in self._SECTIONS:
            getattr(self, name).validate()
        return self

    def to_dict(self) -> dict:
        out = {"schema_version": SCHEMA_VERSION}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in self._SECTIONS:
                value = {g.name: copy.deepcopy(getattr(value, g.name)) for g in fields(value)}
            out[f.name] = copy.deepcopy(value)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}; expected {SCHEMA_VERSION}")
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d).validate()

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise NotFound(f"config file {path} does not exist")
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        for key, value in changes.items():
            d[key] = value
        return ExperimentConfig.from_dict(d)

    def config_hash(self) -> str:
        """Hash of every field that influences results (the output location does not)."""
        d = self.to_dict()
        d.pop("output_dir", None)
        canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def dump(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path
