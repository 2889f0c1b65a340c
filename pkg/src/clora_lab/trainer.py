"""AdamW training loop, LoRA-L2 baseline, and the sequential continual runner."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import adapter as lora
from .errors import ConfigError, TrainingError
from .linalg import make_rng
from .model import TinyModel, accuracy, loss_and_grads, total_loss

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8

METHODS = ("lora", "clora", "lora_l2")

# sub-stream ids under a training seed
_SHUFFLE_STREAM, _DROPOUT_STREAM, _STAGE_STREAM = 10, 11, 12


@dataclass
class TrainConfig:
    lr: float = 1e-2
    batch_size: int = 32
    epochs: int = 10
    warmup_steps: int = 0
    weight_decay: float = 0.0
    l2_reg_weight: float = 0.0
    seed: int = 0
    method: str = "lora"
    grad_clip: Optional[float] = None

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.l2_reg_weight < 0:
            raise ConfigError(f"l2_reg_weight must be >= 0, got {self.l2_reg_weight}")
        if self.warmup_steps < 0:
            raise ConfigError(f"warmup_steps must be >= 0, got {self.warmup_steps}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


@dataclass
class TrainState:
    """Everything needed to resume a run mid-way (besides the model itself)."""

    step: int = 0
    optimizer: AdamState = field(default_factory=AdamState)
    epoch_losses: list = field(default_factory=list)
    running: list = field(default_factory=list)  # objective per batch, current epoch


@dataclass
class TrainReport:
    final_task_loss: float
    loss_curve: list
    orth_losses: dict
    steps: int


@dataclass
class CLReport:
    acc: list  # acc[i][j]: accuracy on test set j after stage i, j <= i

    @property
    def average(self) -> float:
        return float(np.mean(self.acc[-1]))

    def drop(self, task: int = 0) -> float:
        """Accuracy lost on ``task`` between learning it and the last stage."""
        return self.acc[task][task] - self.acc[-1][task]


def lr_at(step: int, total_steps: int, warmup_steps: int, base_lr: float) -> float:
    """Linear warmup from 0 to ``base_lr``, then linear decay to 0 at ``total_steps``."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    if total_steps == warmup_steps:
        return base_lr
    return base_lr * (total_steps - step) / (total_steps - warmup_steps)


def adamw_step(params: dict, grads: dict, state: AdamState, step: int, lr: float,
               weight_decay: float = 0.0):
    """One decoupled-weight-decay Adam update; returns new ``(params, state)``.

    ``step`` is 1-based and drives the bias correction.
    """
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    c1 = 1.0 - BETA1 ** step
    c2 = 1.0 - BETA2 ** step
    new_params, new_m, new_v = {}, {}, {}
    for key, p in params.items():
        g = grads[key]
        m = BETA1 * state.m.get(key, 0.0) + (1.0 - BETA1) * g
        v = BETA2 * state.v.get(key, 0.0) + (1.0 - BETA2) * g * g
        p = p * (1.0 - lr * weight_decay) if weight_decay else p
        new_params[key] = p - lr * (m / c1) / (np.sqrt(v / c2) + EPS)
        new_m[key], new_v[key] = m, v
    return new_params, AdamState(new_m, new_v)


def _objective_flags(model: TinyModel, config: TrainConfig):
    has_reg = any(ad.reg is not None for ad in model.adapters.values())
    if config.method == "clora" and not has_reg:
        raise ConfigError("method 'clora' needs adapters with regularization pairs (set reg_variant and k)")
    use_reg = config.method == "clora"
    l2 = config.l2_reg_weight if config.method == "lora_l2" else 0.0
    return use_reg, l2


def steps_per_epoch(n: int, batch_size: int) -> int:
    # the final short batch is kept
    return math.ceil(n / batch_size)


def train_task(model: TinyModel, dataset, config: TrainConfig, *, state: Optional[TrainState] = None,
               max_steps: Optional[int] = None) -> TrainReport:
    """Train ``model``'s adapters in place on ``dataset`` (anything with ``.x``, ``.y``).

    Shuffling and dropout draw from streams keyed by (seed, epoch) and
    (seed, step), so a run resumed from ``state`` replays exactly. With
    ``max_steps`` the loop stops early and ``state`` holds the position.
    """
    x, y = np.asarray(dataset.x), np.asarray(dataset.y)
    n = len(x)
    if n == 0:
        raise ValueError("dataset is empty")
    use_reg, l2 = _objective_flags(model, config)
    per_epoch = steps_per_epoch(n, config.batch_size)
    total = per_epoch * config.epochs
    state = TrainState() if state is None else state
    stop = total if max_steps is None else min(total, max_steps)
    names = list(model.adapters)

    while state.step < stop:
        epoch, pos = divmod(state.step, per_epoch)
        order = make_rng(config.seed, _SHUFFLE_STREAM, epoch).permutation(n)
        idx = order[pos * config.batch_size:(pos + 1) * config.batch_size]
        step = state.step + 1
        drop_rng = make_rng(config.seed, _DROPOUT_STREAM, step)
        parts, grads = loss_and_grads(model, x[idx], y[idx], use_reg=use_reg, l2_weight=l2,
                                      dropout_rng=drop_rng)
        objective = parts.total if use_reg else parts.task
        if l2:
            objective += l2 * sum(float(np.sum(ad.a ** 2) + np.sum(ad.b ** 2)) for ad in model.adapters.values())
        if not np.isfinite(objective):
            raise TrainingError(f"non-finite loss at step {step}", step=step)

        flat = {}
        params = {}
        for name in names:
            ga, gb = grads[name]
            flat[(name, "a")], flat[(name, "b")] = ga, gb
            params[(name, "a")], params[(name, "b")] = model.adapters[name].a, model.adapters[name].b
        if config.grad_clip is not None:
            norm = math.sqrt(sum(float(np.sum(g * g)) for g in flat.values()))
            if norm > config.grad_clip:
                flat = {key: g * (config.grad_clip / norm) for key, g in flat.items()}
        lr = lr_at(step, total, config.warmup_steps, config.lr)
        params, state.optimizer = adamw_step(params, flat, state.optimizer, step, lr, config.weight_decay)
        for name in names:
            model.adapters[name].a = params[(name, "a")]
            model.adapters[name].b = params[(name, "b")]

        state.step = step
        state.running.append(objective)
        if step % per_epoch == 0:
            state.epoch_losses.append(float(np.mean(state.running)))
            state.running = []

    orth = {name: lora.clora_reg_loss(ad) for name, ad in model.adapters.items() if ad.reg is not None}
    return TrainReport(
        final_task_loss=total_loss(model, x, y).task,
        loss_curve=list(state.epoch_losses),
        orth_losses=orth,
        steps=state.step,
    )


def stage_config(config: TrainConfig, stage: int) -> TrainConfig:
    """Per-stage copy of ``config`` with its own derived seed."""
    seed = int(make_rng(config.seed, _STAGE_STREAM, stage).integers(0, 2**63 - 1))
    return TrainConfig(**{**config.__dict__, "seed": seed})


def run_continual(model: TinyModel, tasks, config: TrainConfig) -> CLReport:
    """Train one shared set of adapters on ``tasks`` in order.

    A fresh optimizer and schedule start each stage. After stage ``i`` the
    model is scored on the test split of every task ``j <= i``.
    """
    tasks = list(tasks)
    if len(tasks) < 2:
        raise ValueError("continual learning needs at least two tasks")
    acc = []
    for i, task in enumerate(tasks):
        train_task(model, task.train, stage_config(config, i))
        acc.append([accuracy(model, tasks[j].test.x, tasks[j].test.y) for j in range(i + 1)])
    return CLReport(acc)
