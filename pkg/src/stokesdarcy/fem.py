"""Finite element spaces and assembly for the coupled Stokes-Darcy problem.

Stokes velocity is vector P2, Darcy velocity is RT0, both pressures are P0, and the
interface flux lives in the scalar P2 trace space with zero endpoint values.

Vector P2 degrees of freedom are numbered ``component * n_nodes + node`` where nodes
are mesh vertices followed by edge midpoints. The RT0 degree of freedom of an edge is
the normal component of the velocity along that edge's global normal.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .geometry import TraceMesh, TriMesh
from .quadrature import gauss_interval, triangle_rule

MIN_QUAD_DEGREE = 4


class ParameterWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PhysicalParams:
    mu: float
    K: float
    alpha: float = 0.0

    def __post_init__(self):
        if not (self.mu > 0 and self.K > 0):
            raise ValueError(f"mu and K must be positive, got mu={self.mu}, K={self.K}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if self.kappa > 1 or self.beta > self.mu:
            warnings.warn(
                f"parameters outside the bounded regime (mu*K={self.kappa:g}, beta={self.beta:g})",
                ParameterWarning,
                stacklevel=3,
            )

    @classmethod
    def from_kappa(cls, kappa: float, mu: float, alpha: float = 0.0) -> "PhysicalParams":
        return cls(mu=mu, K=kappa / mu, alpha=alpha)

    @property
    def kappa(self) -> float:
        return self.mu * self.K

    @property
    def beta(self) -> float:
        return self.alpha * self.mu / math.sqrt(self.kappa)


ScalarField = Callable[[np.ndarray, np.ndarray], np.ndarray]
VectorField = Callable[[np.ndarray, np.ndarray], tuple]


@dataclass(frozen=True)
class ProblemData:
    """Source terms and boundary data, each a function of ``(x, y)`` arrays.

    ``traction`` is the prescribed ``sigma . n`` on the Stokes stress boundary (zero when
    omitted). ``interface_noslip`` replaces the slip condition on the interface by a
    clamped tangential velocity.
    """

    f_S: Optional[VectorField] = None
    f_D: Optional[ScalarField] = None
    f_S_scalar: Optional[ScalarField] = None
    g_p: Optional[ScalarField] = None
    g_u: Optional[VectorField] = None
    traction: Optional[VectorField] = None
    interface_noslip: bool = False


def eval_scalar(f, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    if f is None:
        return np.zeros(pts.shape[:-1])
    return np.broadcast_to(np.asarray(f(pts[..., 0], pts[..., 1]), dtype=float), pts.shape[:-1])


def eval_vector(f, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    if f is None:
        return np.zeros(pts.shape)
    fx, fy = f(pts[..., 0], pts[..., 1])
    shape = pts.shape[:-1]
    return np.stack([np.broadcast_to(np.asarray(fx, float), shape),
                     np.broadcast_to(np.asarray(fy, float), shape)], axis=-1)


# ---------------------------------------------------------------------------
# reference basis functions


def barycentric_gradients(mesh: TriMesh) -> np.ndarray:
    """Constant gradients of the barycentric coordinates, shape (n_cells, 3, 2)."""
    p = mesh.vertices[mesh.cells]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    Jinv = np.linalg.inv(J)
    g12 = Jinv
    g0 = -g12.sum(axis=1, keepdims=True)
    return np.concatenate([g0, g12], axis=1)


def p2_values(lam: np.ndarray) -> np.ndarray:
    """P2 basis at barycentric points ``lam`` (..., 3) in local order v0, v1, v2, m0, m1, m2,
    where ``m_k`` sits on the edge opposite vertex ``k``."""
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    return np.stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1,
    ], axis=-1)


def p2_gradients(lam: np.ndarray, glam: np.ndarray) -> np.ndarray:
    """Physical P2 gradients, shape (n_cells, n_points, 6, 2)."""
    L = lam[None, :, :, None]
    G = glam[:, None, :, :]
    out = np.empty((glam.shape[0], lam.shape[0], 6, 2))
    for k in range(3):
        out[:, :, k] = (4 * L[:, :, k] - 1) * G[:, :, k]
        i, j = (k + 1) % 3, (k + 2) % 3
        out[:, :, 3 + k] = 4 * (L[:, :, j] * G[:, :, i] + L[:, :, i] * G[:, :, j])
    return out


def p2_1d(t: np.ndarray) -> np.ndarray:
    """Quadratic Lagrange basis on [0, 1] in order start, midpoint, end."""
    return np.stack([(1 - t) * (1 - 2 * t), 4 * t * (1 - t), t * (2 * t - 1)], axis=-1)


def p2_1d_derivative(t: np.ndarray) -> np.ndarray:
    return np.stack([4 * t - 3, 4 - 8 * t, 4 * t - 1], axis=-1)


# ---------------------------------------------------------------------------
# spaces


@dataclass(frozen=True, eq=False)
class StokesSpace:
    mesh: TriMesh
    cell_nodes: np.ndarray
    node_coords: np.ndarray
    essential: np.ndarray
    interface: np.ndarray
    free: np.ndarray
    normal_component: int
    normal_sign: float
    tangential: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.node_coords)

    @property
    def ndof(self) -> int:
        return 2 * self.n_nodes

    def dof(self, component: int, node) -> np.ndarray:
        return component * self.n_nodes + np.asarray(node)


@dataclass(frozen=True, eq=False)
class DarcySpace:
    mesh: TriMesh
    essential: np.ndarray
    interface: np.ndarray
    interface_sign: np.ndarray
    free: np.ndarray

    @property
    def ndof(self) -> int:
        return self.mesh.n_edges


@dataclass(frozen=True, eq=False)
class InterfaceSpace:
    """Scalar P2 on the trace mesh; trace nodes ``2k`` are vertices and ``2k+1``
    midpoints, and the two endpoint nodes are removed."""

    trace: TraceMesh
    stokes_nodes: np.ndarray

    @property
    def n_segments(self) -> int:
        return self.trace.n_segments

    @property
    def ndof(self) -> int:
        return 2 * self.n_segments - 1

    def segment_dofs(self, k: int) -> np.ndarray:
        """Interface indices of the three nodes of segment ``k``; -1 marks a removed endpoint."""
        idx = np.array([2 * k, 2 * k + 1, 2 * k + 2]) - 1
        idx[(idx < 0) | (idx >= self.ndof)] = -1
        return idx

    def node_arclength(self) -> np.ndarray:
        b = self.trace.breakpoints
        s = np.empty(2 * self.n_segments + 1)
        s[0::2] = b
        s[1::2] = 0.5 * (b[:-1] + b[1:])
        return s[1:-1]


@dataclass(frozen=True, eq=False)
class SpaceSet:
    stokes: StokesSpace
    darcy: DarcySpace
    interface: InterfaceSpace
    trace: TraceMesh

    @property
    def stokes_neumann(self) -> bool:
        return not self.stokes.mesh.spec.has_tag("stress")

    @property
    def darcy_neumann(self) -> bool:
        return not self.darcy.mesh.spec.has_tag("pressure")

    @property
    def n_total(self) -> int:
        """Velocity and pressure unknowns of both subdomains, interface flux excluded."""
        return self.stokes.ndof + self.stokes.mesh.n_cells + self.darcy.ndof + self.darcy.mesh.n_cells


def build_spaces(stokes: TriMesh, darcy: TriMesh, trace: TraceMesh, noslip: bool = False) -> SpaceSet:
    nv = stokes.n_vertices
    cell_nodes = np.hstack([stokes.cells, nv + stokes.cell_edges])
    node_coords = np.vstack([stokes.vertices, stokes.edge_midpoints()])
    n_nodes = len(node_coords)

    vel_edges = stokes.edges_with_tag("velocity")
    ess_nodes = np.unique(np.concatenate([stokes.edges[vel_edges].ravel(), nv + vel_edges]))

    N = trace.n_segments
    trace_nodes = np.empty(2 * N + 1, dtype=int)
    trace_nodes[0::2] = np.append(trace.stokes_vertices[:, 0], trace.stokes_vertices[-1, 1])
    trace_nodes[1::2] = nv + trace.stokes_edge_of
    if not (np.isin(trace_nodes[[0, -1]], ess_nodes).all()):
        raise ValueError("interface endpoints must carry essential Stokes velocity")
    lam_nodes = trace_nodes[1:-1]

    ncomp = int(np.flatnonzero(np.abs(trace.normal) > 0.5)[0])
    tcomp = 1 - ncomp
    nsign = float(np.sign(trace.normal[ncomp]))

    essential = np.concatenate([ess_nodes, n_nodes + ess_nodes])
    interface = ncomp * n_nodes + lam_nodes
    tangential = tcomp * n_nodes + lam_nodes
    if noslip:
        essential = np.union1d(essential, tangential)
    taken = np.zeros(2 * n_nodes, dtype=bool)
    taken[essential] = True
    if taken[interface].any():
        raise ValueError("interface flux degrees of freedom overlap essential ones")
    taken[interface] = True
    sspace = StokesSpace(
        mesh=stokes, cell_nodes=cell_nodes, node_coords=node_coords,
        essential=np.sort(essential), interface=interface, free=np.flatnonzero(~taken),
        normal_component=ncomp, normal_sign=nsign, tangential=tangential,
    )

    d_ess = darcy.edges_with_tag("velocity")
    d_int = trace.darcy_edge_of
    taken = np.zeros(darcy.n_edges, dtype=bool)
    taken[d_ess] = True
    taken[d_int] = True
    sign = darcy.edge_normals()[d_int] @ trace.normal
    dspace = DarcySpace(mesh=darcy, essential=d_ess, interface=d_int,
                        interface_sign=np.sign(sign), free=np.flatnonzero(~taken))

    ispace = InterfaceSpace(trace=trace, stokes_nodes=lam_nodes)
    return SpaceSet(stokes=sspace, darcy=dspace, interface=ispace, trace=trace)


# ---------------------------------------------------------------------------
# assembly


@dataclass(frozen=True, eq=False)
class AssembledForms:
    """Subdomain matrices on all velocity degrees of freedom plus loads.

    ``F_*`` are the velocity loads of ``f_u`` and ``G_*`` the pressure loads of ``f_p``;
    ``lift_*`` holds the essential boundary values (zero away from essential dofs).
    """

    A_S: sp.csr_matrix
    B_S: sp.csr_matrix
    A_D: sp.csr_matrix
    B_D: sp.csr_matrix
    M_G: np.ndarray
    A_G: np.ndarray
    F_S: np.ndarray
    G_S: np.ndarray
    F_D: np.ndarray
    G_D: np.ndarray
    lift_S: np.ndarray
    lift_D: np.ndarray
    params: PhysicalParams


def _tri_points(mesh: TriMesh, lam: np.ndarray) -> np.ndarray:
    return np.einsum("qk,ckd->cqd", lam, mesh.vertices[mesh.cells])


def _stokes_blocks(space: StokesSpace, mu: float, degree: int):
    mesh = space.mesh
    lam, w = triangle_rule(degree)
    area = mesh.cell_areas()
    G = p2_gradients(lam, barycentric_gradients(mesh))
    lap = np.einsum("q,cqax,cqbx->cba", w, G, G)
    loc = np.einsum("q,cqad,cqbe->cdbea", w, G, G)
    loc[:, 0, :, 0, :] += lap
    loc[:, 1, :, 1, :] += lap
    loc *= 0.5 * mu * area[:, None, None, None, None]

    nn = space.n_nodes
    dofs = np.concatenate([space.cell_nodes, nn + space.cell_nodes], axis=1)
    nc = mesh.n_cells
    rows = np.repeat(dofs, 12, axis=1).ravel()
    cols = np.tile(dofs, (1, 12)).ravel()
    A = sp.coo_matrix((loc.reshape(nc, 12, 12).ravel(), (rows, cols)),
                      shape=(space.ndof, space.ndof)).tocsr()

    div = -np.einsum("q,cqae->cea", w, G) * area[:, None, None]
    B = sp.coo_matrix((div.reshape(nc, 12).ravel(),
                       (np.repeat(np.arange(nc), 12), dofs.ravel())),
                      shape=(nc, space.ndof)).tocsr()
    return A, B


def _rt0_local(mesh: TriMesh, lam: np.ndarray):
    """RT0 basis values at barycentric points, shape (n_cells, n_points, 3, 2)."""
    pts = _tri_points(mesh, lam)
    verts = mesh.vertices[mesh.cells]
    length = mesh.edge_lengths()[mesh.cell_edges]
    coef = mesh.cell_edge_sign * length / (2 * mesh.cell_areas()[:, None])
    return coef[:, None, :, None] * (pts[:, :, None, :] - verts[:, None, :, :])


def _darcy_blocks(space: DarcySpace, K: float, degree: int):
    mesh = space.mesh
    lam, w = triangle_rule(degree)
    area = mesh.cell_areas()
    psi = _rt0_local(mesh, lam)
    loc = np.einsum("q,cqkx,cqlx->ckl", w, psi, psi) * (area / K)[:, None, None]
    e = mesh.cell_edges
    A = sp.coo_matrix((loc.ravel(), (np.repeat(e, 3, axis=1).ravel(), np.tile(e, (1, 3)).ravel())),
                      shape=(space.ndof, space.ndof)).tocsr()
    divint = -mesh.cell_edge_sign * mesh.edge_lengths()[e]
    B = sp.coo_matrix((divint.ravel(), (np.repeat(np.arange(mesh.n_cells), 3), e.ravel())),
                      shape=(mesh.n_cells, space.ndof)).tocsr()
    return A, B


def _cell_integral(mesh: TriMesh, f, degree: int) -> np.ndarray:
    lam, w = triangle_rule(degree)
    vals = eval_scalar(f, _tri_points(mesh, lam))
    return vals @ w * mesh.cell_areas()


def _edge_quadrature(mesh: TriMesh, edges: np.ndarray, n: int = 3):
    t, w = gauss_interval(n)
    a = mesh.vertices[mesh.edges[edges, 0]]
    b = mesh.vertices[mesh.edges[edges, 1]]
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    return t, w, pts, mesh.edge_lengths()[edges]


def _stokes_edge_nodes(space: StokesSpace, edges: np.ndarray) -> np.ndarray:
    m = space.mesh
    return np.column_stack([m.edges[edges, 0], m.n_vertices + edges, m.edges[edges, 1]])


def assemble_interface_matrices(spaces: SpaceSet):
    """Mass and stiffness matrices of the interface space (dense)."""
    ispace = spaces.interface
    h = spaces.trace.lengths
    t, w = gauss_interval(3)
    phi = p2_1d(t)
    dphi = p2_1d_derivative(t)
    m_loc = np.einsum("q,qa,qb->ab", w, phi, phi)
    a_loc = np.einsum("q,qa,qb->ab", w, dphi, dphi)
    n = ispace.ndof
    M = np.zeros((n, n))
    A = np.zeros((n, n))
    for k in range(ispace.n_segments):
        idx = ispace.segment_dofs(k)
        keep = idx >= 0
        sub = np.ix_(idx[keep], idx[keep])
        M[sub] += h[k] * m_loc[np.ix_(keep, keep)]
        A[sub] += a_loc[np.ix_(keep, keep)] / h[k]
    return M, A


def interface_mass_vector(spaces: SpaceSet) -> np.ndarray:
    """Integrals of the interface basis functions, so ``m @ phi = (phi, 1)``."""
    h = spaces.trace.lengths
    ispace = spaces.interface
    m = np.zeros(ispace.ndof)
    loc = np.array([1 / 6, 2 / 3, 1 / 6])
    for k in range(ispace.n_segments):
        idx = ispace.segment_dofs(k)
        keep = idx >= 0
        np.add.at(m, idx[keep], h[k] * loc[keep])
    return m


def assemble_forms(spaces: SpaceSet, params: PhysicalParams, data: ProblemData,
                   quad_degree: int = MIN_QUAD_DEGREE) -> AssembledForms:
    if quad_degree < MIN_QUAD_DEGREE:
        raise ValueError(f"quadrature degree {quad_degree} below the required {MIN_QUAD_DEGREE}")
    S, D = spaces.stokes, spaces.darcy
    smesh, dmesh = S.mesh, D.mesh

    A_S, B_S = _stokes_blocks(S, params.mu, quad_degree)
    beta = params.beta
    if beta > 0:
        A_S = A_S + _bjs_matrix(spaces, beta)
    A_D, B_D = _darcy_blocks(D, params.K, quad_degree)

    # Stokes velocity load: body force and traction.
    F_S = np.zeros(S.ndof)
    lam, w = triangle_rule(quad_degree)
    if data.f_S is not None:
        f = eval_vector(data.f_S, _tri_points(smesh, lam))
        phi = p2_values(lam)
        loc = np.einsum("q,cqe,qa->cea", w, f, phi) * smesh.cell_areas()[:, None, None]
        for comp in range(2):
            np.add.at(F_S, S.dof(comp, S.cell_nodes), loc[:, comp])
    if data.traction is not None:
        edges = smesh.edges_with_tag("stress")
        if len(edges):
            t, wq, pts, length = _edge_quadrature(smesh, edges)
            tv = eval_vector(data.traction, pts)
            loc = np.einsum("q,eqc,qa->eca", wq, tv, p2_1d(t)) * length[:, None, None]
            nodes = _stokes_edge_nodes(S, edges)
            for comp in range(2):
                np.add.at(F_S, S.dof(comp, nodes), loc[:, comp])
    G_S = -_cell_integral(smesh, data.f_S_scalar, quad_degree)

    # Darcy velocity load: natural pressure boundary.
    F_D = np.zeros(D.ndof)
    if data.g_p is not None:
        for side in ("left", "right", "bottom", "top"):
            if dmesh.spec.tags[side] != "pressure":
                continue
            edges = dmesh.edges_on_side(side)
            t, wq, pts, length = _edge_quadrature(dmesh, edges)
            integral = eval_scalar(data.g_p, pts) @ wq * length
            orient = dmesh.edge_normals()[edges] @ dmesh.outward_normal(side)
            F_D[edges] -= orient * integral
    G_D = -_cell_integral(dmesh, data.f_D, quad_degree)

    lift_S = np.zeros(S.ndof)
    if data.g_u is not None:
        vals = eval_vector(data.g_u, S.node_coords)
        full = np.concatenate([vals[:, 0], vals[:, 1]])
        lift_S[S.essential] = full[S.essential]
    lift_D = np.zeros(D.ndof)

    M_G, A_G = assemble_interface_matrices(spaces)
    return AssembledForms(A_S=A_S, B_S=B_S, A_D=A_D, B_D=B_D, M_G=M_G, A_G=A_G,
                          F_S=F_S, G_S=G_S, F_D=F_D, G_D=G_D,
                          lift_S=lift_S, lift_D=lift_D, params=params)


def _bjs_matrix(spaces: SpaceSet, beta: float) -> sp.csr_matrix:
    S = spaces.stokes
    edges = spaces.trace.stokes_edge_of
    t, w = gauss_interval(3)
    phi = p2_1d(t)
    m_loc = np.einsum("q,qa,qb->ab", w, phi, phi)
    tcomp = 1 - S.normal_component
    nodes = S.dof(tcomp, _stokes_edge_nodes(S, edges))
    length = S.mesh.edge_lengths()[edges]
    vals = beta * length[:, None, None] * m_loc[None]
    rows = np.repeat(nodes, 3, axis=1).ravel()
    cols = np.tile(nodes, (1, 3)).ravel()
    return sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(S.ndof, S.ndof)).tocsr()


# ---------------------------------------------------------------------------
# extension operators


@dataclass(frozen=True, eq=False)
class ExtensionOps:
    R_S: sp.csr_matrix
    R_D: sp.csr_matrix


def edge_average_matrix(spaces: SpaceSet) -> sp.csr_matrix:
    """Row ``k`` maps interface coefficients to the mean of the flux over segment ``k``."""
    ispace = spaces.interface
    t, w = gauss_interval(3)
    avg = w @ p2_1d(t)
    rows, cols, vals = [], [], []
    for k in range(ispace.n_segments):
        idx = ispace.segment_dofs(k)
        for a in range(3):
            if idx[a] >= 0:
                rows.append(k)
                cols.append(idx[a])
                vals.append(avg[a])
    return sp.csr_matrix((vals, (rows, cols)), shape=(ispace.n_segments, ispace.ndof))


def build_extensions(spaces: SpaceSet) -> ExtensionOps:
    """Zero extensions supported on the interface degrees of freedom only."""
    S, D, ispace = spaces.stokes, spaces.darcy, spaces.interface
    n = ispace.ndof
    R_S = sp.csr_matrix((np.full(n, S.normal_sign), (S.interface, np.arange(n))),
                        shape=(S.ndof, n))
    T = edge_average_matrix(spaces).tocoo()
    R_D = sp.csr_matrix((D.interface_sign[T.row] * T.data, (D.interface[T.row], T.col)),
                        shape=(D.ndof, n))
    return ExtensionOps(R_S=R_S, R_D=R_D)


@dataclass(frozen=True)
class KernelCheck:
    smallest_singular_value: float
    ok: bool
    message: str


def check_extension_kernel(ext: ExtensionOps, threshold: float = 1e-12) -> KernelCheck:
    stacked = sp.vstack([ext.R_S, ext.R_D]).toarray()
    if stacked.size == 0:
        return KernelCheck(0.0, False, "empty extension matrix")
    smin = float(np.linalg.svd(stacked, compute_uv=False)[-1])
    if smin < threshold:
        return KernelCheck(smin, False, f"extension has a nontrivial kernel (sigma_min={smin:.3e})")
    return KernelCheck(smin, True, "ok")


# ---------------------------------------------------------------------------
# evaluation of discrete fields


def stokes_velocity_at(space: StokesSpace, u: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Velocity at barycentric points of every cell, shape (n_cells, n_points, 2)."""
    phi = p2_values(lam)
    nn = space.n_nodes
    ux = u[:nn][space.cell_nodes] @ phi.T
    uy = u[nn:][space.cell_nodes] @ phi.T
    return np.stack([ux, uy], axis=-1)


def darcy_velocity_at(space: DarcySpace, u: np.ndarray, lam: np.ndarray) -> np.ndarray:
    psi = _rt0_local(space.mesh, lam)
    return np.einsum("cqkx,ck->cqx", psi, u[space.mesh.cell_edges])


def darcy_divergence_at(space: DarcySpace, u: np.ndarray) -> np.ndarray:
    """Cellwise constant divergence of an RT0 field."""
    m = space.mesh
    return (m.cell_edge_sign * m.edge_lengths()[m.cell_edges] * u[m.cell_edges]).sum(axis=1) / m.cell_areas()
