"""Structured triangular meshes of rectangular subdomains and the shared interface mesh."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SIDES = ("left", "right", "bottom", "top")
TAGS = ("interface", "velocity", "stress", "pressure")
MATCH_TOL = 1e-12

_OUTWARD = {
    "left": np.array([-1.0, 0.0]),
    "right": np.array([1.0, 0.0]),
    "bottom": np.array([0.0, -1.0]),
    "top": np.array([0.0, 1.0]),
}


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Rectangle:
    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise MeshError(f"degenerate rectangle {self}")

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def side_coordinate(self, side: str) -> tuple[int, float]:
        """Axis index held fixed on ``side`` and its value."""
        return {
            "left": (0, self.x0),
            "right": (0, self.x1),
            "bottom": (1, self.y0),
            "top": (1, self.y1),
        }[side]


@dataclass(frozen=True)
class BoundarySpec:
    """Tag of every rectangle side.

    Stokes sides use ``velocity`` (essential) and ``stress`` (natural); Darcy sides
    use ``velocity`` (no-flux, essential) and ``pressure`` (natural). The side shared
    with the other subdomain is ``interface``.
    """

    extents: Rectangle
    tags: dict

    def __post_init__(self):
        missing = set(SIDES) - set(self.tags)
        if missing:
            raise MeshError(f"untagged sides: {sorted(missing)}")
        for side, tag in self.tags.items():
            if side not in SIDES:
                raise MeshError(f"unknown side {side!r}")
            if tag not in TAGS:
                raise MeshError(f"unknown tag {tag!r} on side {side!r}")
        if list(self.tags.values()).count("interface") != 1:
            raise MeshError("exactly one side must be tagged 'interface'")

    @property
    def interface_side(self) -> str:
        return next(s for s, t in self.tags.items() if t == "interface")

    def has_tag(self, tag: str) -> bool:
        return tag in self.tags.values()


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Uniform right-triangle mesh of a rectangle.

    ``cell_edges[c, k]`` is the edge opposite local vertex ``k`` of cell ``c`` and
    ``cell_edge_sign[c, k]`` is +1 when the global normal of that edge points out of
    the cell. Edges are stored with the lower vertex index first; their global normal
    is the tangent rotated clockwise.
    """

    vertices: np.ndarray
    cells: np.ndarray
    edges: np.ndarray
    cell_edges: np.ndarray
    cell_edge_sign: np.ndarray
    boundary_edges: np.ndarray
    boundary_side: np.ndarray
    spec: BoundarySpec
    boundary_tags: dict = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def cell_areas(self) -> np.ndarray:
        p = self.vertices[self.cells]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def edge_normals(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        n = np.column_stack([d[:, 1], -d[:, 0]])
        return n / np.hypot(d[:, 0], d[:, 1])[:, None]

    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    def edges_with_tag(self, tag: str) -> np.ndarray:
        return np.array(sorted(e for e, t in self.boundary_tags.items() if t == tag), dtype=int)

    def edges_on_side(self, side: str) -> np.ndarray:
        return self.boundary_edges[self.boundary_side == side]

    def outward_normal(self, side: str) -> np.ndarray:
        return _OUTWARD[side].copy()

    def to_csv(self, path) -> None:
        """Debug dump: one row per vertex, cell and tagged boundary edge."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "index", "a", "b", "c"])
            for i, (x, y) in enumerate(self.vertices):
                w.writerow(["vertex", i, repr(float(x)), repr(float(y)), ""])
            for i, c in enumerate(self.cells):
                w.writerow(["cell", i, *map(int, c)])
            for e in sorted(self.boundary_tags):
                a, b = self.edges[e]
                w.writerow(["edge", e, int(a), int(b), self.boundary_tags[e]])


def build_rect_mesh(extents: Rectangle, nx: int, ny: int, spec: BoundarySpec) -> TriMesh:
    """Mesh ``extents`` with ``2*nx*ny`` triangles, each square cut along its
    lower-left to upper-right diagonal, and tag boundary edges per ``spec``."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise MeshError(f"subdivision counts must be positive integers, got nx={nx}, ny={ny}")
    if spec.extents != extents:
        raise MeshError("boundary spec extents differ from mesh extents")
    nx, ny = int(nx), int(ny)

    xs = np.linspace(extents.x0, extents.x1, nx + 1)
    ys = np.linspace(extents.y0, extents.y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    v00 = j * (nx + 1) + i
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    cells = np.empty((2 * nx * ny, 3), dtype=int)
    cells[0::2] = lower
    cells[1::2] = upper

    local = np.stack([cells[:, [1, 2]], cells[:, [2, 0]], cells[:, [0, 1]]], axis=1)
    pairs = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    cell_edges = inverse.reshape(-1, 3)

    d = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    normals = np.column_stack([d[:, 1], -d[:, 0]])
    mids = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
    opposite = vertices[cells]
    out = np.einsum("ckd,ckd->ck", mids[cell_edges] - opposite, normals[cell_edges])
    cell_edge_sign = np.where(out > 0, 1, -1)

    boundary_edges = np.flatnonzero(counts == 1)
    bmid = mids[boundary_edges]
    boundary_side = np.empty(len(boundary_edges), dtype=object)
    scale = max(extents.x1 - extents.x0, extents.y1 - extents.y0)
    for side in SIDES:
        axis, value = extents.side_coordinate(side)
        boundary_side[np.abs(bmid[:, axis] - value) <= MATCH_TOL * scale] = side
    if any(s is None for s in boundary_side):
        raise MeshError("boundary edge not on any rectangle side")
    boundary_side = boundary_side.astype(str)
    tags = {int(e): spec.tags[s] for e, s in zip(boundary_edges, boundary_side)}

    return TriMesh(
        vertices=vertices,
        cells=cells,
        edges=edges,
        cell_edges=cell_edges,
        cell_edge_sign=cell_edge_sign,
        boundary_edges=boundary_edges,
        boundary_side=boundary_side,
        spec=spec,
        boundary_tags=tags,
    )


@dataclass(frozen=True, eq=False)
class TraceMesh:
    """Interface mesh shared by the two subdomain meshes.

    Segments are ordered by arclength ``s`` along the tangent ``tangent``;
    ``stokes_vertices[k]`` holds the Stokes vertex indices at the start and end of
    segment ``k``. ``normal`` points from the Stokes into the Darcy subdomain.
    """

    breakpoints: np.ndarray
    stokes_edge_of: np.ndarray
    darcy_edge_of: np.ndarray
    stokes_vertices: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    origin: np.ndarray

    @property
    def n_segments(self) -> int:
        return len(self.stokes_edge_of)

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def length(self) -> float:
        return float(self.breakpoints[-1] - self.breakpoints[0])

    def points(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return self.origin + s[..., None] * self.tangent


def check_shared_side(stokes: BoundarySpec, darcy: BoundarySpec) -> None:
    """Both specs must tag their common rectangle side as the interface."""
    a, b = stokes.extents, darcy.extents
    shared = None
    for side, opp in (("top", "bottom"), ("bottom", "top"), ("left", "right"), ("right", "left")):
        axis, v = a.side_coordinate(side)
        _, w = b.side_coordinate(opp)
        lo = (a.x0, a.x1) if axis == 1 else (a.y0, a.y1)
        lo_b = (b.x0, b.x1) if axis == 1 else (b.y0, b.y1)
        if abs(v - w) <= MATCH_TOL and np.allclose(lo, lo_b, atol=MATCH_TOL):
            shared = (side, opp)
    if shared is None:
        raise MeshError("subdomains do not share one full rectangle side")
    if stokes.tags[shared[0]] != "interface" or darcy.tags[shared[1]] != "interface":
        raise MeshError(f"shared side {shared} must be tagged 'interface' on both subdomains")


def _sorted_interface_edges(mesh: TriMesh, side: str, axis_along: int):
    edges = mesh.edges_on_side(side)
    ends = mesh.vertices[mesh.edges[edges]]
    lo = ends[:, :, axis_along].min(axis=1)
    order = np.argsort(lo)
    return edges[order], ends[order]


def extract_trace(stokes: TriMesh, darcy: TriMesh) -> TraceMesh:
    """Build the trace mesh of the interface; grids must match on it."""
    s_side = stokes.spec.interface_side
    d_side = darcy.spec.interface_side
    n_s = stokes.outward_normal(s_side)
    if not np.allclose(n_s, -darcy.outward_normal(d_side)):
        raise MeshError("non-matching interface: interface sides are not opposite")
    s_axis, s_val = stokes.spec.extents.side_coordinate(s_side)
    _, d_val = darcy.spec.extents.side_coordinate(d_side)
    if abs(s_val - d_val) > MATCH_TOL:
        raise MeshError("non-matching interface: subdomains do not touch")
    along = 1 - s_axis

    s_edges, s_ends = _sorted_interface_edges(stokes, s_side, along)
    d_edges, d_ends = _sorted_interface_edges(darcy, d_side, along)
    if len(s_edges) != len(d_edges):
        raise MeshError(
            f"non-matching interface: {len(s_edges)} Stokes vs {len(d_edges)} Darcy edges"
        )
    s_lo = np.sort(s_ends[:, :, along], axis=1)
    d_lo = np.sort(d_ends[:, :, along], axis=1)
    if np.max(np.abs(s_lo - d_lo)) > MATCH_TOL:
        raise MeshError("non-matching interface: edge coordinates differ")

    tangent = np.zeros(2)
    tangent[along] = 1.0
    origin = np.zeros(2)
    origin[s_axis] = s_val
    origin[along] = s_lo[0, 0]
    breakpoints = np.concatenate([s_lo[:, 0], s_lo[-1:, 1]]) - s_lo[0, 0]
    if np.any(np.abs(s_lo[1:, 0] - s_lo[:-1, 1]) > MATCH_TOL):
        raise MeshError("interface segments leave gaps")

    verts = stokes.edges[s_edges]
    first = stokes.vertices[verts[:, 0], along] <= stokes.vertices[verts[:, 1], along]
    stokes_vertices = np.where(first[:, None], verts, verts[:, ::-1])

    lo_side, hi_side = ("bottom", "top") if along == 1 else ("left", "right")
    for side in (lo_side, hi_side):
        if stokes.spec.tags[side] != "velocity":
            raise MeshError(
                f"interface endpoint must touch a velocity-tagged Stokes side; {side!r} is "
                f"{stokes.spec.tags[side]!r}"
            )

    return TraceMesh(
        breakpoints=breakpoints,
        stokes_edge_of=s_edges,
        darcy_edge_of=d_edges,
        stokes_vertices=stokes_vertices,
        normal=n_s,
        tangent=tangent,
        origin=origin,
    )
