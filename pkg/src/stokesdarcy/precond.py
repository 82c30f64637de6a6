"""Interface preconditioners.

The spectral preconditioner inverts the weighted fractional-norm matrix
``mu H(1/2) + K^-1 H(-1/2)`` built from the generalized eigenpairs of the interface
stiffness and mass matrices. The Neumann-Neumann preconditioner sums the inverses of
the two subdomain contributions and costs two extra subdomain solves per application.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .fem import PhysicalParams
from .interface import InterfaceOperator
from .subdomain import SaddleSystem, factorize

EIGEN_FLOOR = 1e-14


class SpectralError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    V: np.ndarray
    Lambda: np.ndarray
    MV: np.ndarray

    @property
    def n(self) -> int:
        return self.Lambda.size

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "eigenvalue"])
            for i, lam in enumerate(self.Lambda):
                w.writerow([i, repr(float(lam))])


def generalized_eig(A: np.ndarray, M: np.ndarray) -> SpectralDecomposition:
    """Eigenpairs of ``A v = lambda M v`` with ``V^T M V = I``, ascending."""
    A = np.asarray(A, dtype=float)
    M = np.asarray(M, dtype=float)
    try:
        lam, V = sla.eigh(A, M)
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"mass matrix is not positive definite ({exc})") from exc
    if lam.size and lam[0] <= EIGEN_FLOOR * max(lam[-1], 0.0):
        raise SpectralError(
            f"eigenvalue {lam[0]:.3e} below floor {EIGEN_FLOOR:g} x {lam[-1]:.3e}; "
            "the stiffness matrix is singular on the constrained space"
        )
    return SpectralDecomposition(V=V, Lambda=lam, MV=M @ V)


def h_matrix(dec: SpectralDecomposition, s: float) -> np.ndarray:
    """``(MV) Lambda^s (MV)^T``."""
    return (dec.MV * dec.Lambda ** s) @ dec.MV.T


def h_matrix_inverse(dec: SpectralDecomposition, s: float) -> np.ndarray:
    return (dec.V * dec.Lambda ** (-s)) @ dec.V.T


@dataclass(frozen=True, eq=False)
class SpectralPreconditioner:
    P: np.ndarray
    params: PhysicalParams

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.P @ r

    def inverse(self, dec: SpectralDecomposition) -> np.ndarray:
        p = self.params
        return p.mu * h_matrix(dec, 0.5) + h_matrix(dec, -0.5) / p.K


def build_spectral_precond(dec: SpectralDecomposition, params: PhysicalParams) -> SpectralPreconditioner:
    root = np.sqrt(dec.Lambda)
    weight = 1.0 / (params.mu * root + 1.0 / (params.K * root))
    P = (dec.V * weight) @ dec.V.T
    return SpectralPreconditioner(P=0.5 * (P + P.T), params=params)


@dataclass(frozen=True, eq=False)
class NNPreconditioner:
    """Subdomain systems with the interface velocity dofs left free.

    The Stokes part is the exact inverse of the Stokes contribution. The Darcy
    contribution is rank deficient on the interface space, so its normal-stress
    response is L2-projected back onto the interface space instead.
    """

    stokes: SaddleSystem
    darcy: SaddleSystem
    stokes_dofs: np.ndarray
    darcy_dofs: np.ndarray
    R_S: sp.csr_matrix
    R_D: sp.csr_matrix
    edge_length: np.ndarray
    mass_factor: tuple

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return apply_nn(self, r)


def build_nn_precond(op: InterfaceOperator) -> NNPreconditioner:
    S, D = op.spaces.stokes, op.spaces.darcy
    forms = op.forms
    s_dofs = np.union1d(S.free, S.interface)
    d_dofs = np.union1d(D.free, D.interface)
    stokes = factorize("stokes-nn", forms.A_S[s_dofs][:, s_dofs], forms.B_S[:, s_dofs])
    darcy = factorize("darcy-nn", forms.A_D[d_dofs][:, d_dofs], forms.B_D[:, d_dofs])
    return NNPreconditioner(
        stokes=stokes, darcy=darcy, stokes_dofs=s_dofs, darcy_dofs=d_dofs,
        R_S=op.ext.R_S[s_dofs], R_D=op.ext.R_D[d_dofs],
        edge_length=D.mesh.edge_lengths()[d_dofs],
        mass_factor=sla.cho_factor(forms.M_G),
    )


def apply_nn(pre: NNPreconditioner, r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    zero_S = np.zeros(pre.stokes.n_p)
    u_S = pre.stokes.solve(pre.R_S @ r, zero_S).u0
    phi_S = pre.R_S.T @ u_S

    rho = sla.cho_solve(pre.mass_factor, r)
    u_D = pre.darcy.solve(pre.edge_length * (pre.R_D @ rho), np.zeros(pre.darcy.n_p)).u0
    phi_D = sla.cho_solve(pre.mass_factor, pre.R_D.T @ (pre.edge_length * u_D))
    return phi_S + phi_D
