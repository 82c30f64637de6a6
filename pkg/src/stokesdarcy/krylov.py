"""Left-preconditioned GMRes with full Arnoldi (modified Gram-Schmidt, two passes), no restart."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Operator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class KrylovConfig:
    tol: float = 1e-6
    max_iter: int = 200
    record_history: bool = True
    keep_basis: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")


@dataclass
class KrylovReport:
    x: np.ndarray
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    basis: Optional[np.ndarray] = None
    breakdown: bool = False

    @property
    def relative_residual(self) -> float:
        return self.history[-1] if self.history else float("nan")


def _givens(a: float, b: float):
    if b == 0.0:
        return 1.0, 0.0
    r = np.hypot(a, b)
    return a / r, b / r


def gmres(apply_A: Operator, apply_P: Operator, rhs: np.ndarray,
          x0: Optional[np.ndarray] = None, cfg: KrylovConfig = KrylovConfig()) -> KrylovReport:
    """Solve ``A x = b`` with stopping on ``|P(b - A x)| <= tol |P b|``.

    ``iterations`` counts calls to ``apply_A`` made after the initial residual.
    Reaching ``max_iter`` returns a non-converged report.
    """
    b = np.asarray(rhs, dtype=float)
    n = b.size
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    ref = float(np.linalg.norm(apply_P(b)))
    r0 = b - apply_A(x0) if np.any(x0) else b.copy()
    z0 = apply_P(r0)
    beta = float(np.linalg.norm(z0))
    history = [beta / ref if ref > 0 else 0.0] if cfg.record_history else []
    if ref == 0.0 or beta <= cfg.tol * ref:
        return KrylovReport(x=x0, iterations=0, converged=True, history=history)

    m = min(cfg.max_iter, n)
    V = np.zeros((m + 1, n))
    H = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    V[0] = z0 / beta
    k = 0
    converged = False
    breakdown = False
    for j in range(m):
        w = apply_P(apply_A(V[j]))
        k = j + 1
        for _ in range(2):  # second pass keeps the basis orthonormal on long runs
            for i in range(j + 1):
                c = w @ V[i]
                H[i, j] += c
                w = w - c * V[i]
        H[j + 1, j] = np.linalg.norm(w)
        for i in range(j):
            t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = t
        hnext = H[j + 1, j]
        cs[j], sn[j] = _givens(H[j, j], hnext)
        H[j, j] = cs[j] * H[j, j] + sn[j] * hnext
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        res = abs(g[j + 1]) / ref
        if cfg.record_history:
            history.append(res)
        if hnext <= 1e-14 * beta:
            breakdown = converged = True
            break
        if res <= cfg.tol:
            converged = True
            break
        V[j + 1] = w / hnext

    y = np.linalg.solve(np.triu(H[:k, :k]), g[:k]) if k else np.zeros(0)
    x = x0 + V[:k].T @ y
    basis = V[:k].T.copy() if cfg.keep_basis else None
    return KrylovReport(x=x, iterations=k, converged=converged, history=history,
                        basis=basis, breakdown=breakdown)
