"""LoRA adapters with optional orthogonal-subspace regularization (CLoRA).

An adapter wraps a frozen m x n weight ``w`` with trainable factors
``a`` (m x r) and ``b`` (n x r). The effective update is
``delta = (alpha / r) * a @ b.T`` and the adapted layer computes
``w @ x + delta @ x`` for column inputs ``x`` (n x batch).

A :class:`RegPair` holds two frozen matrices with orthonormal columns,
``p_a`` (m x k) and ``p_b`` (n x k). The penalty

    orth_loss(a, p_a) + orth_loss(b, p_b),  orth_loss(M, P) = ||M.T @ P||_F^2

pushes every column of ``a`` off span(p_a) and every column of ``b`` off
span(p_b). Once ``b.T @ p_b == 0``, any input in span(p_b) leaves the layer
output unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal, Optional

import numpy as np

from . import linalg
from .errors import InvalidStateError

RegVariant = Literal["random", "svd_major", "svd_minor"]
REG_VARIANTS = ("random", "svd_major", "svd_minor")


@dataclass(frozen=True)
class RegPair:
    p_a: np.ndarray
    p_b: np.ndarray
    variant: str = "random"

    @property
    def k(self) -> int:
        return self.p_a.shape[1]


@dataclass
class LoraAdapter:
    w: np.ndarray
    a: np.ndarray
    b: np.ndarray
    alpha: float
    reg: Optional[RegPair] = None

    def __post_init__(self):
        m, n = self.w.shape
        if self.a.shape[0] != m or self.b.shape[0] != n or self.a.shape[1] != self.b.shape[1]:
            raise ValueError(
                f"inconsistent adapter shapes: w {self.w.shape}, a {self.a.shape}, b {self.b.shape}"
            )
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.reg is not None and (self.reg.p_a.shape[0] != m or self.reg.p_b.shape[0] != n):
            raise ValueError("regularization matrices do not match the weight shape")

    @property
    def rank(self) -> int:
        return self.a.shape[1]

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank

    def copy(self) -> "LoraAdapter":
        return replace(self, a=self.a.copy(), b=self.b.copy())


def init_adapter(w, r: int, alpha: float, std: float, rng: np.random.Generator,
                 reg: Optional[RegPair] = None) -> LoraAdapter:
    """Gaussian ``a``, zero ``b``: the update starts at exactly zero."""
    w = linalg.as_matrix(w, "w")
    m, n = w.shape
    if r < 1 or r > min(m, n):
        raise ValueError(f"rank {r} outside [1, {min(m, n)}] for a {m}x{n} weight")
    a = linalg.gaussian_matrix(m, r, std, rng)
    b = np.zeros((n, r))
    return LoraAdapter(w=w, a=a, b=b, alpha=float(alpha), reg=reg)


def delta(adapter: LoraAdapter) -> np.ndarray:
    return adapter.scaling * (adapter.a @ adapter.b.T)


def forward(adapter: LoraAdapter, x) -> np.ndarray:
    x = linalg.as_matrix(x, "x")
    if x.shape[0] != adapter.w.shape[1]:
        raise ValueError(f"input has {x.shape[0]} rows, weight expects {adapter.w.shape[1]}")
    return adapter.w @ x + adapter.scaling * (adapter.a @ (adapter.b.T @ x))


def merge(adapter: LoraAdapter) -> np.ndarray:
    return adapter.w + delta(adapter)


def _check_rows(m, p):
    m = linalg.as_matrix(m, "trainable matrix")
    p = linalg.as_matrix(p, "regularization matrix")
    if m.shape[0] != p.shape[0]:
        raise ValueError(f"row mismatch: {m.shape} vs {p.shape}")
    return m, p


def orth_loss(m, p) -> float:
    """Sum of squared inner products between every column of ``m`` and of ``p``."""
    m, p = _check_rows(m, p)
    cross = m.T @ p
    return float(np.sum(cross * cross))


def orth_loss_grad(m, p) -> np.ndarray:
    m, p = _check_rows(m, p)
    return 2.0 * (p @ (p.T @ m))


def clora_reg_loss(adapter: LoraAdapter) -> float:
    if adapter.reg is None:
        raise InvalidStateError("adapter has no regularization pair")
    return orth_loss(adapter.a, adapter.reg.p_a) + orth_loss(adapter.b, adapter.reg.p_b)


def init_reg(variant: str, w, k: int, rng: Optional[np.random.Generator] = None) -> RegPair:
    """Build the frozen regularization pair for weight ``w``.

    ``random`` draws orthonormal columns (needs ``rng``); ``svd_major`` and
    ``svd_minor`` take the top or bottom ``k`` singular vectors of ``w``.
    """
    w = linalg.as_matrix(w, "w")
    m, n = w.shape
    if variant == "random":
        if not 1 <= k <= min(m, n):
            raise ValueError(f"k={k} must lie in [1, {min(m, n)}]")
        if rng is None:
            raise ValueError("random regularization needs an rng")
        return RegPair(linalg.orthonormal_init(m, k, rng), linalg.orthonormal_init(n, k, rng), variant)
    if variant in ("svd_major", "svd_minor"):
        p = min(m, n)
        if not 1 <= k <= p:
            raise ValueError(f"k={k} must lie in [1, {p}]")
        res = linalg.svd(w)
        cols = slice(0, k) if variant == "svd_major" else slice(p - k, p)
        return RegPair(res.u[:, cols].copy(), res.v[:, cols].copy(), variant)
    raise ValueError(f"unknown regularization variant {variant!r}; expected one of {REG_VARIANTS}")
