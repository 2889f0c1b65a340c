"""Independent brute-force references used by the test suite.

Nothing here calls into clora_lab. Sums are explicit Python loops so they
share no code path with the vectorised implementations under test.
"""

import math

import numpy as np


def orth_loss(m, p):
    total = 0.0
    for i in range(m.shape[1]):
        for j in range(p.shape[1]):
            dot = 0.0
            for t in range(m.shape[0]):
                dot += m[t, i] * p[t, j]
            total += dot * dot
    return total


def lora_delta(a, b, alpha):
    r = a.shape[1]
    out = np.zeros((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            s = 0.0
            for t in range(r):
                s += a[i, t] * b[j, t]
            out[i, j] = alpha / r * s
    return out


def forgetting(dw, x):
    num = 0.0
    for i in range(dw.shape[0]):
        s = 0.0
        for j in range(dw.shape[1]):
            s += dw[i, j] * x[j]
        num += s * s
    den = sum(v * v for v in x)
    return math.sqrt(num) / math.sqrt(den)


def spectral_norm(m):
    # LAPACK full SVD, a different algorithm from power iteration
    return float(np.linalg.svd(m, compute_uv=False)[0])


def singular_values(m):
    return np.linalg.svd(m, compute_uv=False)


def adamw(params, grads_seq, lr_seq, weight_decay, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar-by-scalar AdamW over a sequence of gradients."""
    p = [float(v) for v in np.ravel(params)]
    m = [0.0] * len(p)
    v = [0.0] * len(p)
    for t, (g, lr) in enumerate(zip(grads_seq, lr_seq), start=1):
        g = np.ravel(g)
        for i in range(len(p)):
            m[i] = b1 * m[i] + (1 - b1) * g[i]
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i]
            mh = m[i] / (1 - b1 ** t)
            vh = v[i] / (1 - b2 ** t)
            p[i] = p[i] - lr * weight_decay * p[i] - lr * mh / (math.sqrt(vh) + eps)
    return np.array(p).reshape(np.shape(params))


def cross_entropy(logits, labels):
    """logits: batch x classes."""
    total = 0.0
    for row, y in zip(logits, labels):
        mx = max(row)
        lse = mx + math.log(sum(math.exp(z - mx) for z in row))
        total += lse - row[y]
    return total / len(labels)


def orth_loss_numeric_grad_extended(m, p, h=1e-5):
    """Central differences of ||M^T P||_F^2 evaluated in extended precision.

    Double-precision differences carry a rounding floor of about
    eps * f / h, which swamps gradient entries that happen to be tiny.
    """
    m = np.asarray(m, dtype=np.longdouble)
    p = np.asarray(p, dtype=np.longdouble)
    h = np.longdouble(h)
    out = np.zeros(m.shape, dtype=np.longdouble)
    for idx in np.ndindex(*m.shape):
        x = m.copy()
        x[idx] += h
        fp = np.sum((x.T @ p) ** 2)
        x[idx] -= 2 * h
        fm = np.sum((x.T @ p) ** 2)
        out[idx] = (fp - fm) / (2 * h)
    return out
