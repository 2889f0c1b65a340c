"""Reverse-mode gradients from the tape, checked against central differences."""

import numpy as np

from clora_lab.grad import Tape, finite_difference_check
from clora_lab.linalg import make_rng
from clora_lab.model import TinyModelConfig, build_model, loss_and_grads, total_loss

rng = make_rng(1)

# a small expression: sum(tanh(A @ B) * C)
a0, b0, c0 = rng.normal(size=(3, 4)), rng.normal(size=(4, 2)), rng.normal(size=(3, 2))
tape = Tape()
a, b = tape.leaf(a0), tape.leaf(b0)
loss = tape.sum(tape.mul(tape.tanh(a @ b), tape.constant(c0)))
grads = tape.backward(loss)

f = lambda m: float(np.sum(np.tanh(m @ b0) * c0))
print("expression, max rel err vs finite differences:", finite_difference_check(f, a0, grads[a]))

# the whole composite objective of a tiny transformer with CLoRA penalties
cfg = TinyModelConfig(kind="transformer", vocab_size=6, seq_len=4, embed_dim=4, hidden_dim=5,
                      rank=2, alpha=4.0, init_std=0.5, reg_variant="random", k=2, lam=0.5)
model = build_model(cfg, seed=0)
for ad in model.adapters.values():
    ad.b = rng.normal(size=ad.b.shape)           # move away from the B = 0 start
x = rng.integers(0, 6, size=(3, 4))
y = rng.integers(0, 2, size=3)

parts, grads = loss_and_grads(model, x, y)
print(f"task loss {parts.task:.4f}, penalty {parts.reg:.4f}, total {parts.total:.4f}")

worst = 0.0
for name, ad in model.adapters.items():
    a_orig = ad.a

    def objective(m):
        ad.a = m
        return total_loss(model, x, y).total

    worst = max(worst, finite_difference_check(objective, a_orig, grads[name][0]))
    ad.a = a_orig
print("transformer, max rel err over every A:", worst)
