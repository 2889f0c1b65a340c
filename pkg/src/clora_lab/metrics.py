"""Capacity and forgetting measurements for trained adapters.

For an effective update ``dW`` and a real activation ``x`` entering the
layer, forgetting is the relative output change ``||dW x|| / ||x||``;
capacity is the spectral norm of ``dW``. Per-site forgetting is the mean
over every collected ``x``; model-level numbers are unweighted means over
sites.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import adapter as lora
from .linalg import spectral_norm
from .model import TinyModel, collect_layer_inputs

SPECTRAL_TOL = 1e-12


def forgetting_of(delta_w, x) -> Optional[float]:
    """``||delta_w @ x|| / ||x||``, or None for a zero ``x`` (excluded from averages)."""
    delta_w = np.asarray(delta_w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64).ravel()
    nx = np.linalg.norm(x)
    if nx == 0.0:
        return None
    return float(np.linalg.norm(delta_w @ x) / nx)


def forgetting_rows(delta_w, xs) -> np.ndarray:
    """Per-row forgetting for a stack of inputs (one input per row); zero rows dropped."""
    xs = np.asarray(xs, dtype=np.float64)
    norms = np.linalg.norm(xs, axis=1)
    keep = norms > 0
    return np.linalg.norm(xs[keep] @ np.asarray(delta_w).T, axis=1) / norms[keep]


@dataclass
class SiteMetrics:
    capacity: float
    forgetting: float
    reference_forgetting: float
    n_inputs: int


@dataclass
class MetricsRecord:
    per_adapter: dict
    model_capacity: float
    model_forgetting: float
    reference_forgetting: float
    absent: list = field(default_factory=list)


def _mean(values) -> float:
    values = list(values)
    return float(np.mean(values)) if values else 0.0


def measure(model: TinyModel, sample_inputs) -> MetricsRecord:
    """Capacity and forgetting of every adapter on activations from ``sample_inputs``.

    Sites that received no usable (nonzero) input are listed in ``absent``
    and left out of the aggregates.
    """
    inputs = collect_layer_inputs(model, sample_inputs)
    per_adapter, absent = {}, []
    for name in sorted(model.adapters):
        ad = model.adapters[name]
        xs = inputs.get(name)
        f = forgetting_rows(lora.delta(ad), xs) if xs is not None else np.empty(0)
        if f.size == 0:
            absent.append(name)
            continue
        ref = forgetting_rows(ad.w, xs)
        per_adapter[name] = SiteMetrics(
            capacity=spectral_norm(lora.delta(ad), tol=SPECTRAL_TOL),
            forgetting=float(np.mean(f)),
            reference_forgetting=float(np.mean(ref)),
            n_inputs=int(f.size),
        )
    sites = [per_adapter[name] for name in sorted(per_adapter)]
    return MetricsRecord(
        per_adapter=per_adapter,
        model_capacity=_mean(s.capacity for s in sites),
        model_forgetting=_mean(s.forgetting for s in sites),
        reference_forgetting=_mean(s.reference_forgetting for s in sites),
        absent=absent,
    )


def sweep_k(base_config, k_values, seeds):
    """Seed-averaged ``(k, capacity, forgetting)`` rows, one per k.

    ``k = 0`` trains plain LoRA. See :func:`clora_lab.harness.experiment.sweep_k`.
    """
    from .harness.experiment import sweep_k as _sweep

    return _sweep(base_config, k_values, seeds)
