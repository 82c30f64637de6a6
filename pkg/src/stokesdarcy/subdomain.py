"""Direct factorization of the per-subdomain saddle-point systems.

The unknowns are the free (non-essential, non-interface) velocity coefficients, the
cell pressures and, for a pure-flux subdomain, one Lagrange multiplier enforcing zero
pressure mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

RESIDUAL_TOL = 1e-10


class SingularSubproblemError(RuntimeError):
    pass


class SubdomainSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class SubdomainSolution:
    u0: np.ndarray
    p: np.ndarray
    r: float


@dataclass(frozen=True, eq=False)
class SaddleSystem:
    """Factorized ``[[A0, B0^T, 0], [B0, 0, m], [0, m^T, 0]]``.

    ``m`` is the vector of cell areas divided by the subdomain area; it is present only
    in Neumann mode.
    """

    name: str
    matrix: sp.csc_matrix
    lu: spla.SuperLU
    n_u: int
    n_p: int
    mean_weights: Optional[np.ndarray]
    norm_inf: float
    refine_steps: int = 1

    @property
    def neumann(self) -> bool:
        return self.mean_weights is not None

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def solve(self, rhs_u: np.ndarray, rhs_p: np.ndarray, check: bool = True) -> SubdomainSolution:
        rhs_u = np.asarray(rhs_u, dtype=float)
        rhs_p = np.asarray(rhs_p, dtype=float)
        if rhs_u.shape != (self.n_u,) or rhs_p.shape != (self.n_p,):
            raise ValueError(
                f"{self.name}: rhs sizes {rhs_u.shape}, {rhs_p.shape} do not match "
                f"({self.n_u},), ({self.n_p},)"
            )
        b = np.concatenate([rhs_u, rhs_p, [0.0] if self.neumann else []])
        x = self.lu.solve(b)
        # Refinement: the mass rows are tiny next to the momentum rows, so a normwise
        # small residual can still be large cell by cell.
        for _ in range(self.refine_steps):
            x = x + self.lu.solve(b - self.matrix @ x)
        if check:
            res = b - self.matrix @ x
            scale = self.norm_inf * np.max(np.abs(x), initial=0.0) + np.max(np.abs(b), initial=0.0)
            err = np.max(np.abs(res), initial=0.0)
            if err > RESIDUAL_TOL * scale:
                x = x + self.lu.solve(res)
                res = b - self.matrix @ x
                err = np.max(np.abs(res), initial=0.0)
                if err > RESIDUAL_TOL * scale:
                    raise SubdomainSolveError(
                        f"{self.name}: residual {err:.3e} exceeds {RESIDUAL_TOL:g} x scale {scale:.3e}"
                    )
        u0 = x[: self.n_u]
        p = x[self.n_u: self.n_u + self.n_p]
        r = float(x[-1]) if self.neumann else 0.0
        return SubdomainSolution(u0=u0, p=p, r=r)


def factorize(name: str, A0: sp.spmatrix, B0: sp.spmatrix, neumann: bool = False,
              cell_areas: Optional[np.ndarray] = None, has_natural_boundary: bool = True) -> SaddleSystem:
    """Factorize a subdomain saddle-point block once for many right-hand sides.

    A pure-flux subdomain (``has_natural_boundary=False``) only admits pressures up to
    a constant; such a system must be built with ``neumann=True``.
    """
    if not has_natural_boundary and not neumann:
        raise SingularSubproblemError(
            f"{name}: no natural boundary, the pressure is defined up to a constant; "
            "the zero-mean pressure constraint (neumann mode) is missing"
        )
    n_u, n_p = A0.shape[0], B0.shape[0]
    blocks = [[A0, B0.T], [B0, None]]
    weights = None
    if neumann:
        if cell_areas is None:
            raise ValueError("neumann mode needs cell areas")
        weights = np.asarray(cell_areas, dtype=float) / float(np.sum(cell_areas))
        col = sp.csr_matrix(weights.reshape(-1, 1))
        blocks = [[A0, B0.T, None], [B0, None, col], [None, col.T, None]]
    K = sp.bmat(blocks, format="csc")
    try:
        lu = spla.splu(K)
    except RuntimeError as exc:
        raise SingularSubproblemError(f"{name}: factorization failed ({exc})") from exc
    norm_inf = float(abs(K).sum(axis=1).max())
    return SaddleSystem(name=name, matrix=K, lu=lu, n_u=n_u, n_p=n_p,
                        mean_weights=weights, norm_inf=norm_inf)
