"""Dense linear algebra on float64 numpy matrices.

A "matrix" throughout the package is a 2-D ``np.ndarray`` of dtype float64.
Random draws come from numpy's PCG64 bit generator; every stream is derived
from an integer root seed plus an integer path through
``np.random.SeedSequence`` so sub-streams are independent and reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError

SVD_TOL = 1e-12
MAX_SWEEPS = 100


def make_rng(seed: int, *path: int) -> np.random.Generator:
    """PCG64 generator for ``seed`` and the sub-stream identified by ``path``.

    ``make_rng(s)`` and ``make_rng(s, 0)`` are different streams; each path
    is an independent child of the root seed.
    """
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a nonempty 2-D array, got shape {arr.shape}")
    return arr


def _check_finite(m: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")


def gaussian_matrix(rows: int, cols: int, std: float, rng: np.random.Generator) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ValueError(f"dimensions must be positive, got ({rows}, {cols})")
    if not std > 0:
        raise ValueError(f"std must be positive, got {std}")
    return rng.normal(0.0, std, size=(rows, cols))


def orthonormal_init(m: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """m x k matrix with orthonormal columns: QR of a Gaussian draw.

    The sign of each column is fixed so that R has a nonnegative diagonal,
    which makes the result a deterministic function of the draw.
    """
    if m < 1 or k < 1:
        raise ValueError(f"dimensions must be positive, got ({m}, {k})")
    if k > m:
        raise ValueError(f"cannot fit {k} orthonormal columns in dimension {m}")
    g = rng.normal(size=(m, k))
    q, r = np.linalg.qr(g)
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    return q * signs


@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray  # m x p, orthonormal columns
    s: np.ndarray  # p, descending, nonnegative
    v: np.ndarray  # n x p, orthonormal columns


def _complete_basis(q: np.ndarray, total: int) -> np.ndarray:
    """Extend orthonormal columns ``q`` (d x j) to ``total`` orthonormal columns."""
    d, j = q.shape
    if j >= total:
        return q
    full, _ = np.linalg.qr(np.hstack([q, np.eye(d)]))
    return np.hstack([q, full[:, j:total]])


def _jacobi_tall(m: np.ndarray):
    """One-sided (Hestenes) Jacobi on a tall matrix, m.shape[0] >= m.shape[1]."""
    g = m.copy()
    n = g.shape[1]
    v = np.eye(n)
    for _ in range(MAX_SWEEPS):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                gi, gj = g[:, i], g[:, j]
                alpha = gi @ gi
                beta = gj @ gj
                gamma = gi @ gj
                if gamma == 0.0 or abs(gamma) <= SVD_TOL * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.hypot(1.0, zeta))
                c = 1.0 / np.hypot(1.0, t)
                s = c * t
                g[:, [i, j]] = np.column_stack([c * gi - s * gj, s * gi + c * gj])
                vi, vj = v[:, i].copy(), v[:, j].copy()
                v[:, i] = c * vi - s * vj
                v[:, j] = s * vi + c * vj
        if not rotated:
            break
    else:
        raise ConvergenceError("Jacobi SVD did not converge", estimate=np.linalg.norm(g, axis=0))

    sigma = np.linalg.norm(g, axis=0)
    # stable sort keeps original column order among ties
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    g = g[:, order]
    v = v[:, order]

    cutoff = max(g.shape) * np.finfo(float).eps * (sigma[0] if sigma.size else 0.0)
    good = int(np.sum(sigma > cutoff))
    u = g[:, :good] / sigma[:good]
    u = _complete_basis(u, n)
    sigma[good:] = 0.0
    return u, sigma, v


def svd(m) -> SvdResult:
    """Thin SVD ``m = u @ diag(s) @ v.T`` by one-sided Jacobi rotations."""
    m = as_matrix(m)
    _check_finite(m, "svd input")
    rows, cols = m.shape
    if rows >= cols:
        u, s, v = _jacobi_tall(m)
    else:
        v, s, u = _jacobi_tall(m.T)
    return SvdResult(u=u, s=s, v=v)


def spectral_norm(m, tol: float = 1e-10, max_iters: int = 100_000, seed: int = 0) -> float:
    """Largest singular value by power iteration on ``m.T @ m``.

    Stops once the eigen-residual bounds the error of the returned value by
    ``tol``. Raises ConvergenceError (carrying the last estimate) otherwise.
    """
    m = as_matrix(m)
    _check_finite(m, "spectral_norm input")
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    gram = m.T @ m
    x = make_rng(seed).normal(size=gram.shape[0])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iters):
        y = gram @ x
        rho = float(x @ y)
        est = float(np.sqrt(max(rho, 0.0)))
        res = float(np.linalg.norm(y - rho * x))
        if res == 0.0 or res <= tol * est:
            return est
        x = y / np.linalg.norm(y)
    raise ConvergenceError(f"power iteration did not reach tol={tol} in {max_iters} iterations", estimate=est)


def matmul(a, b) -> np.ndarray:
    a, b = as_matrix(a, "left"), as_matrix(b, "right")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def add(a, b) -> np.ndarray:
    a, b = as_matrix(a, "left"), as_matrix(b, "right")
    if a.shape != b.shape:
        raise ValueError(f"cannot add {a.shape} and {b.shape}")
    return a + b


def scale(a, c: float) -> np.ndarray:
    return float(c) * as_matrix(a)


def transpose(a) -> np.ndarray:
    return as_matrix(a).T.copy()


def vec_norm(v) -> float:
    return float(np.linalg.norm(np.asarray(v, dtype=np.float64).ravel()))
