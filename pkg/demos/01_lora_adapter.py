"""A LoRA adapter on one frozen weight: zero start, merging, and the orthogonality penalty."""

import numpy as np

from clora_lab import adapter as lora
from clora_lab.linalg import make_rng

rng = make_rng(0)
w = rng.normal(size=(6, 5))                       # frozen 6x5 weight
ad = lora.init_adapter(w, r=2, alpha=4.0, std=0.5, rng=rng)

# B starts at zero, so the adapted layer is the base layer, exactly
x = rng.normal(size=(5, 3))
print("fresh adapter changes output:", not np.array_equal(lora.forward(ad, x), w @ x))
print("scaling alpha/r =", ad.scaling)

# pretend some training happened
ad.b = rng.normal(size=(5, 2))
dw = lora.delta(ad)
print("rank of the update:", np.linalg.matrix_rank(dw))
print("merged weight reproduces the adapted forward:", np.allclose(lora.merge(ad) @ x, lora.forward(ad, x)))

# a regularization pair: k orthonormal columns on each side
reg = lora.init_reg("random", w, k=3, rng=rng)
print("P_A^T P_A = I:", np.allclose(reg.p_a.T @ reg.p_a, np.eye(3)))
print("penalty on A:", lora.orth_loss(ad.a, reg.p_a))
print("penalty on B:", lora.orth_loss(ad.b, reg.p_b))

# the gradient 2 P P^T M points along span(P); one step shrinks the penalty
g = lora.orth_loss_grad(ad.b, reg.p_b)
print("after one gradient step:", lora.orth_loss(ad.b - 0.1 * g, reg.p_b))

# projecting B off span(P_B) zeroes the penalty; inputs in span(P_B) are then untouched
ad.b = ad.b - reg.p_b @ (reg.p_b.T @ ad.b)
x_in_span = reg.p_b @ rng.normal(size=(3, 1))
print("penalty after projection:", lora.orth_loss(ad.b, reg.p_b))
print("output change on span(P_B):", np.linalg.norm(lora.forward(ad, x_in_span) - w @ x_in_span))
