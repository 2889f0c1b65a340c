"""Named experiment configs shared by the acceptance suite, demos and CLI.

``capacity_sweep``: one adapted projection (``mlp_up``) of the residual
MLP on the rotated-features task, rank 8 with alpha = 2r. Used for the k
sweep, the L2 comparison and the rank comparison.

``continual``: the same model on a four-task rotated-features sequence,
45 degrees between consecutive tasks.
"""

from __future__ import annotations

import dataclasses

from ..model import TinyModelConfig
from ..trainer import TrainConfig
from .config import ExperimentConfig
from .data import SyntheticTaskSpec


def capacity_sweep(seed: int = 0) -> ExperimentConfig:
    return ExperimentConfig(
        model=TinyModelConfig(adapter_targets=("mlp_up",), rank=8, alpha=16.0),
        train=TrainConfig(lr=1e-2, batch_size=32, epochs=10, seed=seed),
        data=SyntheticTaskSpec(kind="rotated_features", displacement=3.0),
        measure_samples=100,
    )


def continual(seed: int = 0) -> ExperimentConfig:
    cfg = capacity_sweep(seed)
    return dataclasses.replace(cfg, data=dataclasses.replace(cfg.data, rotation=45.0), num_tasks=4)


def with_rank(cfg: ExperimentConfig, rank: int) -> ExperimentConfig:
    """Change the rank keeping alpha / r = 2."""
    return dataclasses.replace(cfg, model=dataclasses.replace(cfg.model, rank=rank, alpha=2.0 * rank))


def as_clora(cfg: ExperimentConfig, k: int, lam: float = 1.0, variant: str = "random") -> ExperimentConfig:
    return dataclasses.replace(
        cfg,
        model=dataclasses.replace(cfg.model, reg_variant=variant, k=k, lam=lam),
        train=dataclasses.replace(cfg.train, method="clora"),
    )


def as_l2(cfg: ExperimentConfig, weight: float) -> ExperimentConfig:
    return dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, method="lora_l2", l2_reg_weight=weight))


def with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    return dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, seed=seed))
