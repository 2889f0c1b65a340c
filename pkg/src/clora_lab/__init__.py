"""LoRA / CLoRA laboratory: adapters, orthogonal regularization, capacity and forgetting metrics."""

from .adapter import (
    LoraAdapter,
    RegPair,
    clora_reg_loss,
    delta,
    forward,
    init_adapter,
    init_reg,
    merge,
    orth_loss,
    orth_loss_grad,
)
from .metrics import MetricsRecord, forgetting_of, measure
from .model import TinyModel, TinyModelConfig, build_model, collect_layer_inputs, forward_logits, total_loss
from .trainer import CLReport, TrainConfig, TrainReport, adamw_step, lr_at, run_continual, train_task

__version__ = "0.1.0"

__all__ = [
    "CLReport", "LoraAdapter", "MetricsRecord", "RegPair", "TinyModel", "TinyModelConfig", "TrainConfig",
    "TrainReport", "adamw_step", "build_model", "clora_reg_loss", "collect_layer_inputs", "delta",
    "forgetting_of", "forward", "forward_logits", "init_adapter", "init_reg", "lr_at", "measure", "merge",
    "orth_loss", "orth_loss_grad", "run_continual", "total_loss", "train_task",
]
