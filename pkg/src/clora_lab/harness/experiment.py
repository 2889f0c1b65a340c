"""Glue between configs, data, training and measurement."""

from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..metrics import MetricsRecord, measure
from ..model import TinyModel, build_model
from ..trainer import CLReport, TrainReport, TrainState, run_continual, train_task
from .config import ExperimentConfig
from .data import generate_tasks


def model_config_for(cfg: ExperimentConfig):
    """Model config with regularization only when the method is CLoRA."""
    if cfg.train.method == "clora":
        return cfg.model
    return dataclasses.replace(cfg.model, reg_variant=None, k=0)


def make_model(cfg: ExperimentConfig) -> TinyModel:
    return build_model(model_config_for(cfg), seed=cfg.train.seed)


def make_tasks(cfg: ExperimentConfig) -> list:
    return generate_tasks(cfg.data, cfg.num_tasks)


def run_train(cfg: ExperimentConfig, *, model: Optional[TinyModel] = None, state: Optional[TrainState] = None,
              max_steps: Optional[int] = None, tasks=None):
    """Train on the first task; returns ``(model, report, state)``."""
    cfg.validate()
    tasks = make_tasks(cfg) if tasks is None else tasks
    model = make_model(cfg) if model is None else model
    state = TrainState() if state is None else state
    report = train_task(model, tasks[0].train, cfg.train, state=state, max_steps=max_steps)
    return model, report, state


def run_measure(cfg: ExperimentConfig, model: TinyModel, tasks=None) -> MetricsRecord:
    """Capacity/forgetting on the first ``measure_samples`` test inputs of the first task."""
    tasks = make_tasks(cfg) if tasks is None else tasks
    return measure(model, tasks[0].test.x[:cfg.measure_samples])


def train_and_measure(cfg: ExperimentConfig) -> tuple[MetricsRecord, TrainReport]:
    model, report, _ = run_train(cfg)
    return run_measure(cfg, model), report


def run_continual_experiment(cfg: ExperimentConfig) -> CLReport:
    cfg.validate()
    return run_continual(make_model(cfg), make_tasks(cfg), cfg.train)


@dataclass
class SweepRow:
    k: int
    capacity: float
    forgetting: float
    capacity_std: float
    forgetting_std: float
    n_seeds: int


def config_for_k(cfg: ExperimentConfig, k: int, seed: int) -> ExperimentConfig:
    """``k = 0`` is plain LoRA; otherwise CLoRA with ``k`` regularization vectors."""
    train = dataclasses.replace(cfg.train, seed=int(seed), method="lora" if k == 0 else "clora")
    model = dataclasses.replace(cfg.model, k=int(k),
                                reg_variant=None if k == 0 else (cfg.model.reg_variant or "random"))
    return dataclasses.replace(cfg, model=model, train=train)


def _measure_job(cfg: ExperimentConfig) -> tuple[float, float]:
    record, _ = train_and_measure(cfg)
    return record.model_capacity, record.model_forgetting


def fanout() -> int:
    """Worker count from ``CLORA_LAB_THREADS`` (default 1, run inline)."""
    raw = os.environ.get("CLORA_LAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def map_jobs(fn, jobs):
    workers = fanout()
    if workers == 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def sweep_k(cfg: ExperimentConfig, k_values, seeds) -> list:
    """One trained model per (k, seed); seed-averaged capacity and forgetting per k."""
    k_values = [int(k) for k in k_values]
    seeds = [int(s) for s in seeds]
    if k_values != sorted(k_values):
        raise ValueError(f"k_values must be ascending, got {k_values}")
    if not seeds:
        raise ValueError("need at least one seed")
    jobs = [config_for_k(cfg, k, s) for k in k_values for s in seeds]
    results = np.array(map_jobs(_measure_job, jobs)).reshape(len(k_values), len(seeds), 2)
    rows = []
    for k, cells in zip(k_values, results):
        rows.append(SweepRow(
            k=k,
            capacity=float(cells[:, 0].mean()),
            forgetting=float(cells[:, 1].mean()),
            capacity_std=float(cells[:, 0].std()),
            forgetting_std=float(cells[:, 1].std()),
            n_seeds=len(seeds),
        ))
    return rows
