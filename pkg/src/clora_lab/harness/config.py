"""Experiment configuration: nested dataclasses stored as YAML.

Example file::

    model:
      kind: mlp
      input_dim: 64
      rank: 8
      alpha: 16.0
      reg_variant: random
      k: 32
      lam: 1.0
    train:
      lr: 0.01
      epochs: 10
      method: clora
    data:
      kind: rotated_features
      rotation: 45.0
    num_tasks: 4
    out_dir: runs/demo

Unknown keys are rejected. Missing keys take the dataclass defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..errors import ConfigError
from ..model import TinyModelConfig
from ..trainer import TrainConfig
from .data import SyntheticTaskSpec


@dataclass
class ExperimentConfig:
    model: TinyModelConfig = field(default_factory=TinyModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: SyntheticTaskSpec = field(default_factory=SyntheticTaskSpec)
    num_tasks: int = 1
    measure_samples: int = 100
    out_dir: str = "runs"

    def validate(self) -> "ExperimentConfig":
        self.data.validate()
        if self.num_tasks < 1:
            raise ConfigError("num_tasks must be >= 1")
        if self.measure_samples < 1:
            raise ConfigError("measure_samples must be >= 1")
        if self.model.kind == "mlp" and self.data.kind == "char_lm":
            raise ConfigError("char_lm data needs the transformer in lm mode")
        if self.data.kind == "char_lm" and self.model.task != "lm":
            raise ConfigError("char_lm data needs model.task = lm")
        if self.model.kind == "mlp" and (self.model.input_dim != self.data.input_dim
                                         or self.model.num_classes != self.data.num_classes):
            raise ConfigError("model input_dim/num_classes must match the data spec")
        if self.train.method == "clora" and not self.model.uses_reg:
            raise ConfigError("method 'clora' needs model.reg_variant and model.k >= 1")
        return self


def to_dict(config: ExperimentConfig) -> dict:
    d = dataclasses.asdict(config)
    targets = d["model"]["adapter_targets"]
    if targets is not None:
        d["model"]["adapter_targets"] = list(targets)
    return d


def _build(cls, values, where):
    if not isinstance(values, dict):
        raise ConfigError(f"{where} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def from_dict(d: dict) -> ExperimentConfig:
    d = dict(d or {})
    sections = {"model": TinyModelConfig, "train": TrainConfig, "data": SyntheticTaskSpec}
    kwargs = {name: _build(cls, d.pop(name, {}) or {}, name) for name, cls in sections.items()}
    top = {f.name for f in dataclasses.fields(ExperimentConfig)} - set(sections)
    unknown = set(d) - top
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    return ExperimentConfig(**kwargs, **d)


def dumps(config: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(config), sort_keys=True)


def loads(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return from_dict(data)


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


def save(config: ExperimentConfig, path) -> None:
    Path(path).write_text(dumps(config))


def config_hash(config: ExperimentConfig) -> bytes:
    """SHA-256 over everything that shapes a run (the output directory excluded)."""
    d = to_dict(config)
    d.pop("out_dir")
    return hashlib.sha256(yaml.safe_dump(d, sort_keys=True).encode()).digest()


def with_overrides(config: ExperimentConfig, *, seed=None, k=None, lam=None, rank=None, method=None,
                   out=None) -> ExperimentConfig:
    """Copy of ``config`` with CLI-style overrides applied.

    Choosing ``clora`` without a regularization variant selects ``random``.
    """
    d = to_dict(config)
    if seed is not None:
        d["train"]["seed"] = int(seed)
    if k is not None:
        d["model"]["k"] = int(k)
    if lam is not None:
        d["model"]["lam"] = float(lam)
    if rank is not None:
        d["model"]["rank"] = int(rank)
    if method is not None:
        d["train"]["method"] = method
    if out is not None:
        d["out_dir"] = str(out)
    if d["train"]["method"] == "clora" and d["model"]["reg_variant"] is None:
        d["model"]["reg_variant"] = "random"
    return from_dict(d)
