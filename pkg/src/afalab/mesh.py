"""Structured triangulation of the wedge domain 0 <= y <= tan(theta)*x <= tan(theta)*x_max.

The mesh is built column by column: uniform stations in x, and in each column
a fixed set of fractional heights tau in [0, 1] mapped to y = tau*tan(theta)*x.
A blended cosine map packs rows toward both transverse boundaries, so elements
are finer along the wedge edge (where boundary normal derivatives are read
off) without losing interior resolution.  All triangles are right-angled-ish
with maximum angle ~90 degrees, which keeps piecewise-polynomial
interpolation well behaved even for the thin columns near the apex.

The apex corner is either excised at x = x_cut (production: the local channel
energy there dwarfs the states of interest, so the wavefunction is
negligible) or collapsed into a single vertex fan (x_cut = 0, used by the
solver oracle on the genuine triangle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .core import PhysParams


class NodeTag(IntEnum):
    INTERIOR = 0
    BOTTOM_EDGE = 1   # y = 0
    WEDGE_EDGE = 2    # y = tan(theta) * x
    FAR_EDGE = 3      # x = x_max
    CUT_EDGE = 4      # x = x_cut (apex excision line)


@dataclass
class WedgeMesh:
    nodes: np.ndarray        # (N, 2) vertex coordinates
    triangles: np.ndarray    # (T, 3) CCW vertex indices
    node_tags: np.ndarray    # (N,) NodeTag values
    h: float                 # target element size
    slope: float             # tan(theta)
    x_cut: float
    x_max: float
    xs: np.ndarray = field(repr=False, default=None)    # column stations
    taus: np.ndarray = field(repr=False, default=None)  # row fractions

    @property
    def n_vertices(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def has_apex(self) -> bool:
        return self.x_cut == 0.0

    def column_vertex_ids(self, i: int) -> np.ndarray:
        """Vertex ids of column i, bottom to top (the apex column has one)."""
        n_rows = len(self.taus)
        if self.has_apex:
            if i == 0:
                return np.array([0])
            return 1 + (i - 1) * n_rows + np.arange(n_rows)
        return i * n_rows + np.arange(n_rows)


def default_x_max(params: PhysParams, e_target: float) -> float:
    """Truncation: the spring potential exceeds e_target by 10 hbar*omega."""
    return params.R0 + math.sqrt(2.0 * (e_target + 10.0 * params.hbar * params.omega) / params.k)

def default_x_cut(params: PhysParams, e_target: float) -> float:
    """Apex excision: the first channel energy at x_cut is 10x the target."""
    return params.hbar * math.pi / math.sqrt(2.0 * params.m * 10.0 * e_target)


def _row_fractions(n_y: int, grading: float) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n_y + 1)
    return (1.0 - grading) * t + grading * 0.5 * (1.0 - np.cos(math.pi * t))


def build_wedge_mesh_raw(
    slope: float,
    x_max: float,
    target_h: float,
    x_cut: float = 0.0,
    grading: float = 0.5,
) -> WedgeMesh:
    """Triangulate the wedge with edge slope `slope`, truncated at x_max.

    Element size is at most target_h everywhere away from the apex; the
    blended cosine row map (grading in [0, 1)) halves the spacing at the
    bottom and wedge edges relative to a uniform split.
    """
    if slope <= 0.0:
        raise ValueError(f"wedge slope must be positive, got {slope}")
    if not (x_max > x_cut >= 0.0):
        raise ValueError(f"need x_max > x_cut >= 0, got x_max={x_max}, x_cut={x_cut}")
    if target_h <= 0.0:
        raise ValueError("target_h must be positive")

    # target_h bounds the element diameter; cell legs are h/sqrt(2) so the
    # split diagonal stays within it.
    leg = target_h / math.sqrt(2.0)
    n_x = max(2, math.ceil((x_max - x_cut) / leg)) + 1
    # Worst-case row spacing is at x_max, inflated by the grading map's
    # midpoint stretch factor (1 - g) + g*pi/2.
    stretch = (1.0 - grading) + grading * math.pi / 2.0
    n_y = max(2, math.ceil(stretch * slope * x_max / leg))

    xs = np.linspace(x_cut, x_max, n_x)
    taus = _row_fractions(n_y, grading)
    n_rows = n_y + 1

    apex = x_cut == 0.0
    nodes = []
    if apex:
        nodes.append((0.0, 0.0))
        col_start = 1
        first_col = 1
    else:
        col_start = 0
        first_col = 0
    for i in range(first_col, n_x):
        y_top = slope * xs[i]
        for tau in taus:
            nodes.append((xs[i], tau * y_top))
    nodes = np.array(nodes, dtype=float)

    def vid(i: int, j: int) -> int:
        if apex:
            if i == 0:
                return 0
            return 1 + (i - 1) * n_rows + j
        return i * n_rows + j

    tris = []
    i0 = 0
    if apex:
        for j in range(n_y):
            tris.append((0, vid(1, j), vid(1, j + 1)))
        i0 = 1
    for i in range(i0, n_x - 1):
        for j in range(n_y):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    triangles = np.array(tris, dtype=np.int64)

    tags = classify_points(nodes, slope, x_cut, x_max)
    return WedgeMesh(
        nodes=nodes,
        triangles=triangles,
        node_tags=tags,
        h=target_h,
        slope=slope,
        x_cut=x_cut,
        x_max=x_max,
        xs=xs,
        taus=taus,
    )


def classify_points(points: np.ndarray, slope: float, x_cut: float, x_max: float) -> np.ndarray:
    """Boundary tags from coordinates alone (works for vertices and midpoints)."""
    x, y = points[:, 0], points[:, 1]
    eps = 1e-12 * x_max
    tags = np.full(len(points), int(NodeTag.INTERIOR), dtype=np.int8)
    on_cut = (x_cut > 0.0) & (np.abs(x - x_cut) <= eps)
    tags[on_cut] = NodeTag.CUT_EDGE
    tags[np.abs(x - x_max) <= eps] = NodeTag.FAR_EDGE
    tags[np.abs(y - slope * x) <= eps * (1.0 + slope)] = NodeTag.WEDGE_EDGE
    tags[np.abs(y) <= eps] = NodeTag.BOTTOM_EDGE
    return tags


def build_wedge_mesh(
    params: PhysParams,
    x_max: float,
    target_h: float,
    x_cut: float | None = None,
    e_target: float = 12.0,
    grading: float = 0.5,
) -> WedgeMesh:
    """Production mesh for the transformed eigenproblem at the given parameters."""
    if x_max <= params.R0:
        raise ValueError(f"x_max={x_max} must exceed R0={params.R0}")
    if x_cut is None:
        x_cut = default_x_cut(params, e_target)
    return build_wedge_mesh_raw(params.tan_theta, x_max, target_h, x_cut=x_cut, grading=grading)


def edge_census(mesh: WedgeMesh) -> tuple[int, int]:
    """(interior, boundary) edge counts; conforming meshes have no other kind."""
    from collections import Counter

    counter: Counter = Counter()
    for tri in mesh.triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            counter[(min(a, b), max(a, b))] += 1
    interior = sum(1 for c in counter.values() if c == 2)
    boundary = sum(1 for c in counter.values() if c == 1)
    stray = sum(1 for c in counter.values() if c > 2)
    if stray:
        raise ValueError(f"non-conforming mesh: {stray} edges shared by >2 triangles")
    return interior, boundary


def triangle_areas(mesh: WedgeMesh) -> np.ndarray:
    p = mesh.nodes[mesh.triangles]
    return 0.5 * np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
