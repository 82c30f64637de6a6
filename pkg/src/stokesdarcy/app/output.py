"""Legacy ASCII VTK export and CSV run summaries."""

from __future__ import annotations

import csv

import numpy as np

from ..fem import darcy_velocity_at
from ..interface import ReconstructedSolution

VTK_TRIANGLE = 5
VTK_QUADRATIC_TRIANGLE = 22


def _darcy_vertex_velocity(space, u: np.ndarray) -> np.ndarray:
    """RT0 velocity averaged over the cells around each vertex."""
    mesh = space.mesh
    corners = np.eye(3)
    vals = darcy_velocity_at(space, u, corners)
    acc = np.zeros((mesh.n_vertices, 2))
    count = np.zeros(mesh.n_vertices)
    for k in range(3):
        np.add.at(acc, mesh.cells[:, k], vals[:, k])
        np.add.at(count, mesh.cells[:, k], 1)
    return acc / count[:, None]


def write_vtk(path, disc, sol: ReconstructedSolution) -> None:
    """Both subdomains in one unstructured grid.

    Stokes cells are quadratic triangles on the P2 nodes, Darcy cells linear triangles.
    """
    S, D = disc.spaces.stokes, disc.spaces.darcy
    nn = S.n_nodes
    pts_S = S.node_coords
    vel_S = np.column_stack([sol.u_S[:nn], sol.u_S[nn:]])
    pts_D = D.mesh.vertices
    vel_D = _darcy_vertex_velocity(D, sol.u_D)
    # VTK quadratic triangle order: corners, then midpoints of edges 01, 12, 20
    cells_S = S.cell_nodes[:, [0, 1, 2, 5, 3, 4]]
    cells_D = D.mesh.cells + len(pts_S)
    points = np.vstack([pts_S, pts_D])
    velocity = np.vstack([vel_S, vel_D])
    n_cells = len(cells_S) + len(cells_D)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\nstokes-darcy solution\nASCII\n"
                 "DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(points)} double\n")
        for x, y in points:
            fh.write(f"{x:.16g} {y:.16g} 0\n")
        fh.write(f"CELLS {n_cells} {len(cells_S) * 7 + len(cells_D) * 4}\n")
        for c in cells_S:
            fh.write("6 " + " ".join(map(str, c)) + "\n")
        for c in cells_D:
            fh.write("3 " + " ".join(map(str, c)) + "\n")
        fh.write(f"CELL_TYPES {n_cells}\n")
        fh.write(f"{VTK_QUADRATIC_TRIANGLE}\n" * len(cells_S))
        fh.write(f"{VTK_TRIANGLE}\n" * len(cells_D))
        fh.write(f"CELL_DATA {n_cells}\nSCALARS pressure double 1\nLOOKUP_TABLE default\n")
        for p in np.concatenate([sol.p_S, sol.p_D]):
            fh.write(f"{p:.16g}\n")
        fh.write("SCALARS subdomain int 1\nLOOKUP_TABLE default\n")
        fh.write("0\n" * len(cells_S))
        fh.write("1\n" * len(cells_D))
        fh.write(f"POINT_DATA {len(points)}\nVECTORS velocity double\n")
        for vx, vy in velocity:
            fh.write(f"{vx:.16g} {vy:.16g} 0\n")


def write_report_csv(path, report) -> None:
    cons = report.conservation
    row = {
        "case": report.case, "resolution": report.resolution, "mu": report.mu, "K": report.K,
        "alpha": report.alpha, "precond": report.precond, "iterations": report.iterations,
        "converged": report.converged, "n_lambda": report.n_lambda, "n_total": report.n_total,
        "conservation_ok": cons.passed,
        "stokes_mass": cons.stokes.relative, "darcy_mass": cons.darcy.relative,
        "interface_flux": cons.interface.relative,
    }
    if report.errors is not None:
        for k, v in vars(report.errors).items():
            row[f"error_{k}"] = v
    for k, v in report.timings.items():
        row[f"time_{k}"] = v
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(row))
        w.writeheader()
        w.writerow(row)
