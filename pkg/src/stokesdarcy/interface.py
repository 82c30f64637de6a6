"""Interface (Steklov-Poincare) operator for the normal flux across the interface.

Given the interface flux ``phi``, each subdomain is solved with ``phi`` as its normal
velocity on the interface; the operator returns the resulting dual residual on the
interface space. The reconstruction of velocity and pressure from any ``phi`` conserves
mass cell by cell, whether or not ``phi`` has converged.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import AssembledForms, ExtensionOps, SpaceSet, interface_mass_vector
from .subdomain import SaddleSystem, factorize

DIRICHLET = "dirichlet"
NEUMANN_DARCY = "neumann-darcy"
NEUMANN_STOKES = "neumann-stokes"
COUPLED = "coupled"

CONSERVATION_TOL = 1e-11
DENSE_LIMIT = 256


@dataclass(frozen=True, eq=False)
class Subdomain:
    """One side of the interface with its factorized system.

    Velocity vectors handed around here always cover every velocity dof of the
    subdomain; ``free`` selects the ones solved for by ``system``.
    """

    name: str
    A: sp.csr_matrix
    B: sp.csr_matrix
    R: sp.csr_matrix
    free: np.ndarray
    F: np.ndarray
    G: np.ndarray
    lift: np.ndarray
    cell_areas: np.ndarray
    system: SaddleSystem

    @property
    def neumann(self) -> bool:
        return self.system.neumann

    def solve_given(self, w: np.ndarray, with_data: bool):
        """Complete ``w`` (interface and essential values) to a subdomain solution.

        Returns the full velocity, pressure and multiplier.
        """
        Aw = self.A @ w
        Bw = self.B @ w
        if with_data:
            rhs_u = (self.F - Aw)[self.free]
            rhs_p = self.G - Bw
        else:
            rhs_u = -Aw[self.free]
            rhs_p = -Bw
        sol = self.system.solve(rhs_u, rhs_p)
        u = w.copy()
        u[self.free] += sol.u0
        return u, sol.p, sol.r

    def interface_residual(self, u: np.ndarray, p: np.ndarray, with_data: bool) -> np.ndarray:
        r = self.A @ u + self.B.T @ p
        if with_data:
            r = self.F - r
        return self.R.T @ r


def make_subdomains(spaces: SpaceSet, forms: AssembledForms, ext: ExtensionOps):
    S, D = spaces.stokes, spaces.darcy
    out = []
    for name, space, A, B, R, F, G, lift, neu, natural in (
        ("stokes", S, forms.A_S, forms.B_S, ext.R_S, forms.F_S, forms.G_S, forms.lift_S,
         spaces.stokes_neumann, not spaces.stokes_neumann),
        ("darcy", D, forms.A_D, forms.B_D, ext.R_D, forms.F_D, forms.G_D, forms.lift_D,
         spaces.darcy_neumann, not spaces.darcy_neumann),
    ):
        free = space.free
        areas = space.mesh.cell_areas()
        system = factorize(name, A[free][:, free], B[:, free], neumann=neu,
                           cell_areas=areas, has_natural_boundary=natural)
        out.append(Subdomain(name=name, A=A, B=B, R=R, free=free, F=F, G=G, lift=lift,
                             cell_areas=areas, system=system))
    return out


def build_zeta(M: np.ndarray, A: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Interface flux of unit mean with the smallest discrete H^1 norm."""
    n = len(m)
    K = np.zeros((n + 1, n + 1))
    K[:n, :n] = A + M
    K[:n, n] = m
    K[n, :n] = m
    rhs = np.zeros(n + 1)
    rhs[n] = 1.0
    return np.linalg.solve(K, rhs)[:n]


def build_phi_star(zeta: np.ndarray, sub: Subdomain) -> np.ndarray:
    """Multiple of ``zeta`` making the pure-flux subdomain ``sub`` mass-compatible.

    The factor is fixed by requiring the summed conservation equations of ``sub`` to
    hold; for the Darcy side this is ``f_p(1_D)``.
    """
    total = np.sum(sub.G - sub.B @ sub.lift)
    per_unit = np.sum(sub.B @ (sub.R @ zeta))
    return zeta * (total / per_unit)


@dataclass
class ReconstructedSolution:
    u_S: np.ndarray
    p_S: np.ndarray
    u_D: np.ndarray
    p_D: np.ndarray
    phi: np.ndarray
    pressure_shift: float = 0.0
    multipliers: tuple = (0.0, 0.0)


@dataclass(frozen=True)
class FamilyCheck:
    name: str
    max_violation: float
    scale: float
    worst_index: int
    residuals: np.ndarray = field(repr=False)

    @property
    def relative(self) -> float:
        return self.max_violation / self.scale

    def passed(self, tol: float = CONSERVATION_TOL) -> bool:
        return self.relative <= tol


@dataclass(frozen=True)
class ConservationReport:
    stokes: FamilyCheck
    darcy: FamilyCheck
    interface: FamilyCheck
    tol: float = CONSERVATION_TOL

    @property
    def families(self):
        return (self.stokes, self.darcy, self.interface)

    @property
    def passed(self) -> bool:
        return all(f.passed(self.tol) for f in self.families)

    def summary(self) -> str:
        return "; ".join(
            f"{f.name}: {f.relative:.2e} (worst #{f.worst_index})" for f in self.families
        )


class InterfaceOperator:
    """Interface operator, right-hand side and reconstruction for one problem.

    In the Neumann modes the unknown is the zero-mean part ``phi0`` of the flux; the
    system operator ``Q^T Sigma Q`` and the data ``Q^T chi`` use the oblique projector
    ``Q = I - zeta m^T`` onto zero-mean fluxes.
    """

    def __init__(self, spaces: SpaceSet, forms: AssembledForms, ext: ExtensionOps):
        self.spaces = spaces
        self.forms = forms
        self.ext = ext
        self.stokes, self.darcy = make_subdomains(spaces, forms, ext)
        self.n = spaces.interface.ndof
        self.m = interface_mass_vector(spaces)
        if spaces.stokes_neumann and spaces.darcy_neumann:
            self.mode = COUPLED
        elif spaces.darcy_neumann:
            self.mode = NEUMANN_DARCY
        elif spaces.stokes_neumann:
            self.mode = NEUMANN_STOKES
        else:
            self.mode = DIRICHLET
        self.zeta: Optional[np.ndarray] = None
        self.phi_star = np.zeros(self.n)
        if self.neumann:
            self.zeta = build_zeta(forms.M_G, forms.A_G, self.m)
            ref = self.darcy if self.darcy.neumann else self.stokes
            self.phi_star = build_phi_star(self.zeta, ref)
        self._chi: Optional[np.ndarray] = None

    @property
    def subdomains(self):
        return (self.stokes, self.darcy)

    @property
    def neumann(self) -> bool:
        return self.mode != DIRICHLET

    # projections onto zero-mean fluxes (identity in the Dirichlet mode)
    def project_primal(self, x: np.ndarray) -> np.ndarray:
        if not self.neumann:
            return x
        return x - self.zeta * (self.m @ x)

    def project_dual(self, r: np.ndarray) -> np.ndarray:
        if not self.neumann:
            return r
        return r - self.m * (self.zeta @ r)

    def sigma_parts(self, phi: np.ndarray):
        """Stokes and Darcy contributions to the raw operator; one solve each."""
        phi = np.asarray(phi, dtype=float)
        parts = []
        for sub in self.subdomains:
            u, p, _ = sub.solve_given(sub.R @ phi, with_data=False)
            parts.append(sub.interface_residual(u, p, with_data=False))
        return tuple(parts)

    def apply_sigma(self, phi: np.ndarray, project: Optional[bool] = None) -> np.ndarray:
        if project is None:
            project = self.neumann
        if project:
            phi = self.project_primal(phi)
        s, d = self.sigma_parts(phi)
        out = s + d
        return self.project_dual(out) if project else out

    def chi(self) -> np.ndarray:
        """Raw right-hand side including the compensating flux ``phi_star``."""
        if self._chi is None:
            total = np.zeros(self.n)
            for sub in self.subdomains:
                w = sub.R @ self.phi_star + sub.lift
                u, p, _ = sub.solve_given(w, with_data=True)
                total += sub.interface_residual(u, p, with_data=True)
            self._chi = total
        return self._chi

    def assemble_chi(self) -> np.ndarray:
        """Right-hand side of the (projected) interface system."""
        return self.project_dual(self.chi())

    def recover_pressure_shift(self, phi0: np.ndarray):
        """Constant ``c`` and the cellwise shifts added to the Stokes and Darcy pressures."""
        nS = self.stokes.cell_areas.size
        nD = self.darcy.cell_areas.size
        if not self.neumann:
            return 0.0, np.zeros(nS), np.zeros(nD)
        c = float(self.zeta @ (self.chi() - self.apply_sigma(phi0, project=False)))
        if self.mode == NEUMANN_DARCY:
            return c, np.zeros(nS), np.full(nD, c)
        if self.mode == NEUMANN_STOKES:
            return c, np.full(nS, -c), np.zeros(nD)
        area_S = self.stokes.cell_areas.sum()
        area_D = self.darcy.cell_areas.sum()
        frac = area_D / (area_S + area_D)
        return c, np.full(nS, -c * frac), np.full(nD, c * (1 - frac))

    def reconstruct(self, phi: np.ndarray) -> ReconstructedSolution:
        """Velocities and pressures driven by the total interface flux ``phi``.

        In the Neumann modes the zero-mean part of ``phi - phi_star`` is used, which
        keeps the reconstruction mass-compatible for any input.
        """
        phi = np.asarray(phi, dtype=float)
        phi0 = self.project_primal(phi - self.phi_star)
        phi = phi0 + self.phi_star
        fields = []
        rs = []
        for sub in self.subdomains:
            u, p, r = sub.solve_given(sub.R @ phi + sub.lift, with_data=True)
            fields.append((u, p))
            rs.append(r)
        c, shift_S, shift_D = self.recover_pressure_shift(phi0)
        (u_S, p_S), (u_D, p_D) = fields
        return ReconstructedSolution(u_S=u_S, p_S=p_S + shift_S, u_D=u_D, p_D=p_D + shift_D,
                                     phi=phi, pressure_shift=c, multipliers=tuple(rs))

    def dense_sigma(self, project: bool = False) -> np.ndarray:
        """Operator matrix by a basis sweep; test and diagnostics path only."""
        if self.n > DENSE_LIMIT:
            raise ValueError(f"dense assembly limited to n <= {DENSE_LIMIT}, got {self.n}")
        I = np.eye(self.n)
        return np.column_stack([self.apply_sigma(I[:, j], project=project) for j in range(self.n)])

    def dense_sigma_parts(self):
        if self.n > DENSE_LIMIT:
            raise ValueError(f"dense assembly limited to n <= {DENSE_LIMIT}, got {self.n}")
        cols = [self.sigma_parts(e) for e in np.eye(self.n)]
        return (np.column_stack([c[0] for c in cols]), np.column_stack([c[1] for c in cols]))

    def zero_mean_basis(self) -> np.ndarray:
        """Orthonormal basis of the zero-mean subspace (columns); identity if not Neumann."""
        if not self.neumann:
            return np.eye(self.n)
        q, _ = np.linalg.qr(np.column_stack([self.m, np.eye(self.n)]))
        return q[:, 1:self.n]


def _family(name: str, terms: sp.spmatrix, values: np.ndarray, target: np.ndarray) -> FamilyCheck:
    res = terms @ values - target
    mag = abs(terms) @ np.abs(values) + np.abs(target)
    scale = max(float(np.max(mag, initial=0.0)), np.finfo(float).tiny)
    worst = int(np.argmax(np.abs(res))) if res.size else -1
    return FamilyCheck(name=name, max_violation=float(np.max(np.abs(res), initial=0.0)),
                       scale=scale, worst_index=worst, residuals=res)


def interface_flux_matrices(spaces: SpaceSet):
    """Matrices giving the flux through each interface segment from the full Stokes
    and Darcy velocity vectors."""
    S, D = spaces.stokes, spaces.darcy
    trace = spaces.trace
    h = trace.lengths
    N = trace.n_segments
    nv = S.mesh.n_vertices
    rows, cols, vals = [], [], []
    for k in range(N):
        a, b = trace.stokes_vertices[k]
        mid = nv + trace.stokes_edge_of[k]
        for node, wgt in ((a, 1 / 6), (mid, 2 / 3), (b, 1 / 6)):
            rows.append(k)
            cols.append(S.dof(S.normal_component, node))
            vals.append(S.normal_sign * h[k] * wgt)
    flux_S = sp.csr_matrix((vals, (rows, cols)), shape=(N, S.ndof))
    flux_D = sp.csr_matrix((D.interface_sign * h, (np.arange(N), D.interface)), shape=(N, D.ndof))
    return flux_S, flux_D


def check_conservation(sol: ReconstructedSolution, op: InterfaceOperator,
                       tol: float = CONSERVATION_TOL) -> ConservationReport:
    """Cellwise mass balance in both subdomains and segmentwise flux continuity."""
    forms = op.forms
    stokes = _family("stokes", forms.B_S, sol.u_S, forms.G_S)
    darcy = _family("darcy", forms.B_D, sol.u_D, forms.G_D)
    flux_S, flux_D = interface_flux_matrices(op.spaces)
    jump = sp.hstack([flux_S, -flux_D]).tocsr()
    iface = _family("interface", jump, np.concatenate([sol.u_S, sol.u_D]), np.zeros(jump.shape[0]))
    return ConservationReport(stokes=stokes, darcy=darcy, interface=iface, tol=tol)


def monolithic_solve(op: InterfaceOperator) -> ReconstructedSolution:
    """Direct sparse solve of the fully coupled block system (reference solution).

    When both subdomains are pure-flux the global pressure constant is fixed by a
    zero-mean constraint over the whole domain.
    """
    S, D = op.stokes, op.darcy
    fS, fD = S.free, D.free
    ARS = S.A @ S.R
    ARD = D.A @ D.R
    BRS = S.B @ S.R
    BRD = D.B @ D.R
    nS, nD = len(fS), len(fD)
    npS, npD = S.B.shape[0], D.B.shape[0]
    C = (S.R.T @ ARS + D.R.T @ ARD)
    blocks = [
        [S.A[fS][:, fS], S.B[:, fS].T, None, None, ARS[fS]],
        [S.B[:, fS], None, None, None, BRS],
        [None, None, D.A[fD][:, fD], D.B[:, fD].T, ARD[fD]],
        [None, None, D.B[:, fD], None, BRD],
        [ARS[fS].T, BRS.T, ARD[fD].T, BRD.T, C],
    ]
    FS = S.F - S.A @ S.lift
    FD = D.F - D.A @ D.lift
    rhs = [FS[fS], S.G - S.B @ S.lift, FD[fD], D.G - D.B @ D.lift, S.R.T @ FS + D.R.T @ FD]
    coupled = op.mode == COUPLED
    if coupled:
        w = np.concatenate([S.cell_areas, D.cell_areas])
        w = w / w.sum()
        col = np.zeros(nS + npS + nD + npD + op.n)
        col[nS:nS + npS] = w[:npS]
        col[nS + npS + nD:nS + npS + nD + npD] = w[npS:]
        K = sp.bmat(blocks, format="csr")
        colm = sp.csr_matrix(col.reshape(-1, 1))
        K = sp.bmat([[K, colm], [colm.T, None]], format="csc")
        rhs.append([0.0])
    else:
        K = sp.bmat(blocks, format="csc")
    x = spla.splu(K).solve(np.concatenate(rhs))
    offs = np.cumsum([0, nS, npS, nD, npD, op.n])
    phi = x[offs[4]:offs[5]]
    u_S = S.R @ phi + S.lift
    u_S[fS] += x[offs[0]:offs[1]]
    u_D = D.R @ phi + D.lift
    u_D[fD] += x[offs[2]:offs[3]]
    return ReconstructedSolution(u_S=u_S, p_S=x[offs[1]:offs[2]], u_D=u_D,
                                 p_D=x[offs[3]:offs[4]], phi=phi)
