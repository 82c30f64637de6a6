"""Test problems: the two benchmark cases, the manufactured solution and custom setups."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..fem import ProblemData
from ..geometry import BoundarySpec, Rectangle


@dataclass(frozen=True)
class ExactSolution:
    u_S: Callable
    p_S: Callable
    u_D: Callable
    p_D: Callable
    div_u_D: Callable


@dataclass(frozen=True)
class CaseDefinition:
    name: str
    stokes: BoundarySpec
    darcy: BoundarySpec
    data: ProblemData
    exact: Optional[ExactSolution] = None

    @property
    def neumann_mode(self) -> str:
        s = not self.stokes.has_tag("stress")
        d = not self.darcy.has_tag("pressure")
        if s and d:
            return "coupled-neumann"
        if s or d:
            return "single-neumann"
        return "dirichlet"

    def cells(self, resolution: int):
        """Cells per direction of each subdomain for ``resolution`` cells per unit length."""
        out = []
        for spec in (self.stokes, self.darcy):
            r = spec.extents
            out.append((_count(r.x1 - r.x0, resolution), _count(r.y1 - r.y0, resolution)))
        return out


def _count(length: float, resolution: int) -> int:
    n = length * resolution
    if abs(n - round(n)) > 1e-9 or round(n) < 1:
        raise ValueError(f"side of length {length} is not meshed conformly at resolution {resolution}")
    return int(round(n))


UNIT_STOKES = Rectangle(0.0, 1.0, 0.0, 1.0)
UNIT_DARCY = Rectangle(0.0, 1.0, -1.0, 0.0)


def define_case1() -> CaseDefinition:
    """Darcy pressure ``y`` on the lateral Darcy sides, traction-free Stokes top."""
    stokes = BoundarySpec(UNIT_STOKES, {"left": "velocity", "right": "velocity",
                                        "bottom": "interface", "top": "stress"})
    darcy = BoundarySpec(UNIT_DARCY, {"left": "pressure", "right": "pressure",
                                      "bottom": "velocity", "top": "interface"})
    data = ProblemData(g_p=lambda x, y: y)
    return CaseDefinition("case1", stokes, darcy, data)


def case2_profile(x, y):
    return (np.zeros_like(y), y * (2 - y))


def define_case2() -> CaseDefinition:
    """Parabolic Stokes wall velocity, no-flux Darcy boundary (single-Neumann)."""
    stokes = BoundarySpec(UNIT_STOKES, {"left": "velocity", "right": "velocity",
                                        "bottom": "interface", "top": "stress"})
    darcy = BoundarySpec(UNIT_DARCY, {"left": "velocity", "right": "velocity",
                                      "bottom": "velocity", "top": "interface"})
    data = ProblemData(g_u=case2_profile)
    return CaseDefinition("case2", stokes, darcy, data)


def manufactured_exact(mu: float, K: float) -> ExactSolution:
    def u_S(x, y):
        return ((y - 1) ** 2, x * (x - 1))

    def p_S(x, y):
        return mu * (x + y - 1) + 1 / (3 * K) + 0 * x

    def p_D(x, y):
        return (x * (1 - x) * (y - 1) + y ** 3 / 3 - y ** 2 + y) / K + mu * x

    def u_D(x, y):
        return (-(1 - 2 * x) * (y - 1) - mu * K, -(x * (1 - x) + (y - 1) ** 2))

    def div_u_D(x, y):
        return 0 * x

    return ExactSolution(u_S=u_S, p_S=p_S, u_D=u_D, p_D=p_D, div_u_D=div_u_D)


def define_manufactured(mu: float = 1.0, K: float = 1.0) -> CaseDefinition:
    """Polynomial solution on (0,1)x(0,2) with the interface at y = 1 and no-slip on it."""
    ex = manufactured_exact(mu, K)
    stokes = BoundarySpec(Rectangle(0.0, 1.0, 1.0, 2.0),
                          {"left": "velocity", "right": "velocity",
                           "bottom": "interface", "top": "stress"})
    darcy = BoundarySpec(Rectangle(0.0, 1.0, 0.0, 1.0),
                         {"left": "pressure", "right": "pressure",
                          "bottom": "pressure", "top": "interface"})

    def traction(x, y):
        return (mu * (x + y - 1.5), -ex.p_S(x, y))

    data = ProblemData(g_u=ex.u_S, g_p=ex.p_D, traction=traction, interface_noslip=True)
    return CaseDefinition("manufactured", stokes, darcy, data, exact=ex)


def define_custom(stokes_tags: dict, darcy_tags: dict, data: ProblemData,
                  stokes_box: Rectangle = UNIT_STOKES, darcy_box: Rectangle = UNIT_DARCY,
                  name: str = "custom", exact: Optional[ExactSolution] = None) -> CaseDefinition:
    return CaseDefinition(name, BoundarySpec(stokes_box, dict(stokes_tags)),
                          BoundarySpec(darcy_box, dict(darcy_tags)), data, exact)


def define_closed_cavity() -> CaseDefinition:
    """Both subdomains enclosed by walls (coupled-Neumann); the Stokes mass source is
    drained by the Darcy sink, so the net source vanishes."""
    stokes = BoundarySpec(UNIT_STOKES, {"left": "velocity", "right": "velocity",
                                        "bottom": "interface", "top": "velocity"})
    darcy = BoundarySpec(UNIT_DARCY, {"left": "velocity", "right": "velocity",
                                      "bottom": "velocity", "top": "interface"})

    def f_S(x, y):
        return (np.sin(np.pi * y), x * y)

    def src_S(x, y):
        return 1 + np.cos(np.pi * x)

    def src_D(x, y):
        return -1 + np.cos(2 * np.pi * x) * (1 + y)

    data = ProblemData(f_S=f_S, f_S_scalar=src_S, f_D=src_D)
    return CaseDefinition("cavity", stokes, darcy, data)


CASES = {
    "case1": define_case1,
    "case2": define_case2,
    "manufactured": define_manufactured,
    "cavity": define_closed_cavity,
}
