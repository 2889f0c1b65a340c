"""Tape-based reverse-mode differentiation over 2-D float64 arrays.

Every primitive appends a node to the tape in execution order, so the tape
is topologically sorted by construction. ``backward`` walks it in reverse,
summing adjoints in node order. Forward values are stored read-only; a
backward rule that tried to write into one would raise.

    tape = Tape()
    a = tape.leaf(np.ones((2, 3)))
    loss = (a * a).sum()
    grads = tape.backward(loss)      # {a: 2 * a.value}
"""

from __future__ import annotations

from typing import Callable

import numpy as np


class Var:
    """Handle to one node on a tape."""

    __slots__ = ("tape", "index")

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.index]

    @property
    def shape(self):
        return self.value.shape

    @property
    def requires_grad(self) -> bool:
        return self.tape.needs_grad[self.index]

    def __matmul__(self, other):
        return self.tape.matmul(self, other)

    def __add__(self, other):
        return self.tape.add(self, other)

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Var):
            return self.tape.mul(self, other)
        return self.tape.scale(self, other)

    __rmul__ = __mul__

    @property
    def T(self):
        return self.tape.transpose(self)

    def sum(self):
        return self.tape.sum(self)

    def __hash__(self):
        return hash((id(self.tape), self.index))

    def __eq__(self, other):
        return isinstance(other, Var) and other.tape is self.tape and other.index == self.index

    def __repr__(self):
        return f"Var(#{self.index}, shape={self.shape})"


def _frozen(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ValueError(f"tape values must be 2-D, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


class Tape:
    def __init__(self):
        self.values: list[np.ndarray] = []
        self.needs_grad: list[bool] = []
        self.is_leaf: list[bool] = []
        self.parents: list[tuple[int, ...]] = []
        self.rules: list[Callable | None] = []

    def __len__(self):
        return len(self.values)

    def _push(self, value, parents: tuple[Var, ...], rule, leaf=False, requires_grad=False) -> Var:
        needs = requires_grad or any(p.requires_grad for p in parents)
        self.values.append(_frozen(value))
        self.needs_grad.append(needs)
        self.is_leaf.append(leaf)
        self.parents.append(tuple(p.index for p in parents))
        # rules are dropped for subgraphs that carry no gradient
        self.rules.append(rule if needs and not leaf else None)
        return Var(self, len(self.values) - 1)

    def _lift(self, x) -> Var:
        if isinstance(x, Var):
            if x.tape is not self:
                raise ValueError("Var belongs to a different tape")
            return x
        return self.constant(x)

    # -- leaves ---------------------------------------------------------------

    def leaf(self, value, requires_grad: bool = True) -> Var:
        return self._push(value, (), None, leaf=True, requires_grad=requires_grad)

    def constant(self, value) -> Var:
        return self.leaf(value, requires_grad=False)

    # -- primitives -----------------------------------------------------------

    def matmul(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)
        av, bv = a.value, b.value
        if av.shape[1] != bv.shape[0]:
            raise ValueError(f"matmul shape mismatch {av.shape} @ {bv.shape}")
        return self._push(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))

    def add(self, a, b) -> Var:
        """Elementwise sum; ``b`` may be a column (m x 1) broadcast across columns."""
        a, b = self._lift(a), self._lift(b)
        av, bv = a.value, b.value
        if av.shape == bv.shape:
            return self._push(av + bv, (a, b), lambda g: (g, g))
        if bv.shape == (av.shape[0], 1):
            return self._push(av + bv, (a, b), lambda g: (g, g.sum(axis=1, keepdims=True)))
        raise ValueError(f"add shape mismatch {av.shape} + {bv.shape}")

    def sub(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)
        if a.shape != b.shape:
            raise ValueError(f"sub shape mismatch {a.shape} - {b.shape}")
        return self._push(a.value - b.value, (a, b), lambda g: (g, -g))

    def mul(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)
        av, bv = a.value, b.value
        if av.shape != bv.shape:
            raise ValueError(f"mul shape mismatch {av.shape} * {bv.shape}")
        return self._push(av * bv, (a, b), lambda g: (g * bv, g * av))

    def scale(self, a, c: float) -> Var:
        a = self._lift(a)
        c = float(c)
        return self._push(c * a.value, (a,), lambda g: (c * g,))

    def transpose(self, a) -> Var:
        a = self._lift(a)
        return self._push(a.value.T, (a,), lambda g: (g.T,))

    def relu(self, a) -> Var:
        a = self._lift(a)
        mask = a.value > 0
        return self._push(np.where(mask, a.value, 0.0), (a,), lambda g: (np.where(mask, g, 0.0),))

    def tanh(self, a) -> Var:
        a = self._lift(a)
        out = np.tanh(a.value)
        return self._push(out, (a,), lambda g: (g * (1.0 - out * out),))

    def sum(self, a) -> Var:
        a = self._lift(a)
        shape = a.shape
        return self._push(a.value.sum(), (a,), lambda g: (np.full(shape, g[0, 0]),))

    def sum_squares(self, a) -> Var:
        a = self._lift(a)
        av = a.value
        return self._push(np.sum(av * av), (a,), lambda g: (2.0 * g[0, 0] * av,))

    def take_columns(self, a, index) -> Var:
        """``a[:, index]``; repeated indices accumulate in the adjoint."""
        a = self._lift(a)
        index = np.asarray(index, dtype=np.intp).ravel()
        shape = a.shape

        def rule(g):
            out = np.zeros(shape)
            np.add.at(out, (slice(None), index), g)
            return (out,)

        return self._push(a.value[:, index], (a,), rule)

    def dropout(self, a, rate: float, rng: np.random.Generator) -> Var:
        a = self._lift(a)
        if rate <= 0.0:
            return a
        keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
        return self._push(a.value * keep, (a,), lambda g: (g * keep,))

    def softmax_columns(self, a, mask=None) -> Var:
        """Softmax down each column; entries where ``mask`` is False get probability 0.

        Every column must keep at least one unmasked entry.
        """
        a = self._lift(a)
        z = a.value
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            z = np.where(mask, z, -np.inf)
        z = z - z.max(axis=0, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=0, keepdims=True)

        def rule(g):
            return (p * (g - np.sum(g * p, axis=0, keepdims=True)),)

        return self._push(p, (a,), rule)

    def cross_entropy(self, logits, labels) -> Var:
        """Mean cross-entropy of column-wise softmax(logits) against integer labels.

        ``logits`` is classes x batch. Row-max subtraction keeps exp() finite.
        """
        logits = self._lift(logits)
        z = logits.value
        labels = np.asarray(labels, dtype=np.intp).ravel()
        n = z.shape[1]
        if labels.shape[0] != n:
            raise ValueError(f"{labels.shape[0]} labels for {n} columns")
        shifted = z - z.max(axis=0, keepdims=True)
        logsum = np.log(np.exp(shifted).sum(axis=0))
        cols = np.arange(n)
        loss = float(np.mean(logsum - shifted[labels, cols]))
        probs = np.exp(shifted - logsum)

        def rule(g):
            d = probs.copy()
            d[labels, cols] -= 1.0
            return (g[0, 0] * d / n,)

        return self._push(loss, (logits,), rule)

    # -- reverse pass ---------------------------------------------------------

    def backward(self, loss: Var, wrt=None) -> dict[Var, np.ndarray]:
        """Adjoints of a scalar ``loss`` for every requires-grad leaf (or ``wrt``)."""
        loss = self._lift(loss)
        if loss.shape != (1, 1):
            raise ValueError(f"backward needs a 1x1 loss, got shape {loss.shape}")
        adj: dict[int, np.ndarray] = {loss.index: np.ones((1, 1))}
        for i in range(loss.index, -1, -1):
            g = adj.get(i)
            if g is None or self.rules[i] is None:
                continue
            for p, gp in zip(self.parents[i], self.rules[i](g)):
                if not self.needs_grad[p]:
                    continue
                if p in adj:
                    adj[p] = adj[p] + gp
                else:
                    adj[p] = gp
        leaves = wrt if wrt is not None else [
            Var(self, i) for i in range(len(self.values)) if self.is_leaf[i] and self.needs_grad[i]
        ]
        out = {}
        for v in leaves:
            g = adj.get(v.index)
            out[v] = np.zeros(v.shape) if g is None else np.array(g)
        return out


def finite_difference_check(f: Callable[[np.ndarray], float], m, analytic, h: float = 1e-5) -> float:
    """Max relative error between ``analytic`` and central differences of ``f`` at ``m``.

    Per entry the denominator is max(1e-8, |analytic| + |numeric|).
    """
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    m = np.array(m, dtype=np.float64)
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = numeric_gradient(f, m, h)
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))


def numeric_gradient(f: Callable[[np.ndarray], float], m, h: float = 1e-5) -> np.ndarray:
    m = np.array(m, dtype=np.float64)
    out = np.zeros_like(m)
    for idx in np.ndindex(*m.shape):
        orig = m[idx]
        m[idx] = orig + h
        fp = f(m.copy())
        m[idx] = orig - h
        fm = f(m.copy())
        m[idx] = orig
        out[idx] = (fp - fm) / (2.0 * h)
    return out
