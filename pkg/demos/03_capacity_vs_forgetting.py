"""Sweeping k: more regularization directions, less forgetting, less capacity.

Forgetting is ||dW x|| / ||x|| on held-out inputs entering the adapted layer;
capacity is the largest singular value of dW. Plain LoRA is the k = 0 row.
An L2 penalty on A and B lowers forgetting too, but by shrinking dW overall.
"""

import numpy as np

from clora_lab.harness import presets
from clora_lab.harness.experiment import sweep_k, train_and_measure
from clora_lab.harness.reports import SWEEP_HEADER, format_table

seeds = [0, 1, 2]
base = presets.capacity_sweep()

rows = sweep_k(base, [0, 4, 8, 16, 32], seeds)
print(format_table(SWEEP_HEADER, [{k: f"{v:.4g}" if isinstance(v, float) else v for k, v in vars(r).items()}
                                  for r in rows]))

print("\nLoRA-L2 for comparison")
for weight in (1e-3, 1e-2, 1e-1):
    records = [train_and_measure(presets.as_l2(presets.capacity_sweep(s), weight))[0] for s in seeds]
    cap = np.mean([r.model_capacity for r in records])
    f = np.mean([r.model_forgetting for r in records])
    print(f"  weight {weight:g}: capacity {cap:.3f}, forgetting {f:.3f}")

print("\nrank alone (alpha = 2r)")
for rank in (2, 8):
    records = [train_and_measure(presets.with_rank(presets.capacity_sweep(s), rank))[0] for s in seeds]
    print(f"  r={rank}: capacity {np.mean([r.model_capacity for r in records]):.3f}, "
          f"forgetting {np.mean([r.model_forgetting for r in records]):.3f}")
