"""Driver for the interface iteration: discretize, precondition, iterate, reconstruct."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..fem import (AssembledForms, ExtensionOps, PhysicalParams, SpaceSet, assemble_forms,
                   build_extensions, build_spaces, darcy_velocity_at, stokes_velocity_at,
                   darcy_divergence_at, eval_scalar, eval_vector)
from ..geometry import TraceMesh, TriMesh, build_rect_mesh, check_shared_side, extract_trace
from ..interface import ConservationReport, InterfaceOperator, ReconstructedSolution, check_conservation
from ..krylov import KrylovConfig, KrylovReport, gmres
from ..precond import (SpectralDecomposition, build_nn_precond, build_spectral_precond,
                       generalized_eig)
from ..quadrature import triangle_rule
from .cases import CASES, CaseDefinition, ExactSolution

PRECONDITIONERS = ("spectral", "nn", "none")


class AlgorithmError(RuntimeError):
    """Failure inside one stage of a run; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class ExperimentConfig:
    case: str = "case1"
    resolution: int = 8
    mu: float = 1.0
    K: float = 1.0
    alpha: float = 0.0
    tol: float = 1e-6
    max_iter: int = 200
    precond: str = "spectral"
    csv: Optional[str] = None
    vtk: Optional[str] = None

    def __post_init__(self):
        if self.resolution < 1:
            raise ValueError(f"resolution must be at least 1, got {self.resolution}")
        if not (self.mu > 0 and self.K > 0) or self.alpha < 0:
            raise ValueError("mu and K must be positive and alpha nonnegative")
        if self.precond not in PRECONDITIONERS:
            raise ValueError(f"unknown preconditioner {self.precond!r}")

    @property
    def params(self) -> PhysicalParams:
        return PhysicalParams(self.mu, self.K, self.alpha)


@dataclass(eq=False)
class Discretization:
    case: CaseDefinition
    resolution: int
    stokes_mesh: TriMesh
    darcy_mesh: TriMesh
    trace: TraceMesh
    spaces: SpaceSet
    forms: AssembledForms
    ext: ExtensionOps
    op: InterfaceOperator
    timings: dict = field(default_factory=dict)

    @property
    def n_lambda(self) -> int:
        return self.spaces.interface.ndof

    @property
    def n_total(self) -> int:
        return self.spaces.n_total


def build_meshes(case: CaseDefinition, resolution: int):
    check_shared_side(case.stokes, case.darcy)
    (sx, sy), (dx, dy) = case.cells(resolution)
    stokes = build_rect_mesh(case.stokes.extents, sx, sy, case.stokes)
    darcy = build_rect_mesh(case.darcy.extents, dx, dy, case.darcy)
    return stokes, darcy, extract_trace(stokes, darcy)


def discretize(case: CaseDefinition, resolution: int, params: PhysicalParams) -> Discretization:
    timings = {}
    t = time.perf_counter()
    stokes, darcy, trace = build_meshes(case, resolution)
    spaces = build_spaces(stokes, darcy, trace, noslip=case.data.interface_noslip)
    forms = assemble_forms(spaces, params, case.data)
    ext = build_extensions(spaces)
    timings["assemble"] = time.perf_counter() - t
    t = time.perf_counter()
    op = InterfaceOperator(spaces, forms, ext)
    timings["factorize"] = time.perf_counter() - t
    return Discretization(case, resolution, stokes, darcy, trace, spaces, forms, ext, op, timings)


def make_preconditioner(kind: str, disc: Discretization, params: PhysicalParams,
                        decomposition: Optional[SpectralDecomposition] = None):
    """Preconditioner action, wrapped with the zero-mean projections in Neumann modes."""
    op = disc.op
    if kind == "spectral":
        dec = decomposition or generalized_eig(disc.forms.A_G, disc.forms.M_G)
        base = build_spectral_precond(dec, params)
    elif kind == "nn":
        base = build_nn_precond(op)
    elif kind == "none":
        return lambda r: op.project_primal(op.project_dual(r))
    else:
        raise ValueError(f"unknown preconditioner {kind!r}")
    return lambda r: op.project_primal(base(op.project_dual(r)))


@dataclass(frozen=True)
class ErrorNorms:
    velocity_S: float
    pressure: float
    pressure_S: float
    pressure_D: float
    flux_D: float
    hdiv_D: float


def compute_errors(disc: Discretization, sol: ReconstructedSolution, exact: ExactSolution,
                   degree: int = 4) -> ErrorNorms:
    """L2 errors against exact fields using a degree-4 cell quadrature."""
    lam, w = triangle_rule(degree)
    S, D = disc.spaces.stokes, disc.spaces.darcy

    def pts(mesh):
        return np.einsum("qk,ckd->cqd", lam, mesh.vertices[mesh.cells])

    def l2(diff, mesh):
        sq = diff ** 2
        if sq.ndim == 3:
            sq = sq.sum(axis=-1)
        return float(np.sqrt(np.sum(sq @ w * mesh.cell_areas())))

    ps, pd = pts(S.mesh), pts(D.mesh)
    eu = l2(stokes_velocity_at(S, sol.u_S, lam) - eval_vector(exact.u_S, ps), S.mesh)
    ep_S = l2(sol.p_S[:, None] - eval_scalar(exact.p_S, ps), S.mesh)
    ep_D = l2(sol.p_D[:, None] - eval_scalar(exact.p_D, pd), D.mesh)
    ef = l2(darcy_velocity_at(D, sol.u_D, lam) - eval_vector(exact.u_D, pd), D.mesh)
    ediv = l2(darcy_divergence_at(D, sol.u_D)[:, None] - eval_scalar(exact.div_u_D, pd), D.mesh)
    return ErrorNorms(velocity_S=eu, pressure=float(np.hypot(ep_S, ep_D)), pressure_S=ep_S,
                      pressure_D=ep_D, flux_D=ef, hdiv_D=float(np.hypot(ef, ediv)))


@dataclass
class RunReport:
    case: str
    resolution: int
    mu: float
    K: float
    alpha: float
    precond: str
    iterations: int
    converged: bool
    n_lambda: int
    n_total: int
    conservation: ConservationReport
    errors: Optional[ErrorNorms]
    timings: dict
    history: list
    multipliers: tuple

    def summary(self) -> str:
        status = "converged" if self.converged else "truncated"
        lines = [
            f"{self.case}: 1/h={self.resolution} mu={self.mu:g} K={self.K:g} alpha={self.alpha:g} "
            f"precond={self.precond}",
            f"  iterations={self.iterations} ({status}), n_lambda={self.n_lambda}, n_total={self.n_total}",
            f"  conservation {'ok' if self.conservation.passed else 'VIOLATED'}: {self.conservation.summary()}",
            "  timings: " + ", ".join(f"{k}={v:.3f}s" for k, v in self.timings.items()),
        ]
        if self.errors is not None:
            e = self.errors
            lines.append(f"  errors: u_S={e.velocity_S:.4e} p={e.pressure:.4e} "
                         f"u_D={e.flux_D:.4e} hdiv={e.hdiv_D:.4e}")
        return "\n".join(lines)


def resolve_case(cfg: ExperimentConfig) -> CaseDefinition:
    if cfg.case == "manufactured":
        return CASES["manufactured"](cfg.mu, cfg.K)
    if cfg.case not in CASES:
        raise ValueError(f"unknown case {cfg.case!r}")
    return CASES[cfg.case]()


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except AlgorithmError:
        raise
    except Exception as exc:  # re-raised with the stage attached
        raise AlgorithmError(name, exc) from exc


def run_algorithm1(cfg: ExperimentConfig, case: Optional[CaseDefinition] = None,
                   decomposition: Optional[SpectralDecomposition] = None,
                   keep_basis: bool = False):
    """Run the preconditioned interface iteration and reconstruct the solution.

    Returns ``(report, solution, krylov_report)``.
    """
    case = case or resolve_case(cfg)
    params = cfg.params
    disc = _stage("discretize", discretize, case, cfg.resolution, params)
    timings = dict(disc.timings)

    t = time.perf_counter()
    apply_P = _stage("precondition", make_preconditioner, cfg.precond, disc, params, decomposition)
    timings["eig" if cfg.precond == "spectral" else "precondition"] = time.perf_counter() - t

    op = disc.op
    t = time.perf_counter()
    rhs = _stage("rhs", op.assemble_chi)
    timings["rhs"] = time.perf_counter() - t

    t = time.perf_counter()
    kcfg = KrylovConfig(tol=cfg.tol, max_iter=cfg.max_iter, keep_basis=keep_basis)
    kr: KrylovReport = _stage("gmres", gmres, op.apply_sigma, apply_P, rhs, None, kcfg)
    timings["gmres"] = time.perf_counter() - t

    t = time.perf_counter()
    sol = _stage("reconstruct", op.reconstruct, op.phi_star + op.project_primal(kr.x))
    cons = check_conservation(sol, op)
    timings["reconstruct"] = time.perf_counter() - t

    errors = compute_errors(disc, sol, case.exact) if case.exact is not None else None
    report = RunReport(case=case.name, resolution=cfg.resolution, mu=cfg.mu, K=cfg.K,
                       alpha=cfg.alpha, precond=cfg.precond, iterations=kr.iterations,
                       converged=kr.converged, n_lambda=disc.n_lambda, n_total=disc.n_total,
                       conservation=cons, errors=errors, timings=timings, history=kr.history,
                       multipliers=sol.multipliers)
    return report, sol, kr, disc
