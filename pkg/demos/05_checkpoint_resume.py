"""Stop a run half-way, write a checkpoint, and finish from disk.

The shuffle order and dropout masks are keyed by (seed, epoch) and
(seed, step), so the resumed run lands on the same bits as an
uninterrupted one.
"""

import dataclasses
import tempfile
from pathlib import Path

import numpy as np

from clora_lab.harness import checkpoint, presets
from clora_lab.harness.experiment import run_train

cfg = presets.as_clora(presets.capacity_sweep(), 16)
cfg = dataclasses.replace(cfg, model=dataclasses.replace(cfg.model, dropout=0.1))

full, report, _ = run_train(cfg)
print(f"uninterrupted: {report.steps} steps, final task loss {report.final_task_loss:.6f}")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "checkpoint.bin"
    model, _, state = run_train(cfg, max_steps=50)
    checkpoint.save(path, cfg, model, state)
    print(f"stopped at step {state.step}, checkpoint is {path.stat().st_size} bytes")

    model, state = checkpoint.load(path, cfg)
    resumed, report, _ = run_train(cfg, model=model, state=state)
    print(f"resumed: {report.steps} steps, final task loss {report.final_task_loss:.6f}")

same = all(np.array_equal(full.adapters[n].b, resumed.adapters[n].b) for n in full.adapters)
print("bitwise identical adapters:", same)
