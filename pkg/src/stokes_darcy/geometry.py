"""Structured triangulations of the fluid and porous rectangles."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np


class BoundaryTag(enum.IntEnum):
    FLUID_OUTER = 0
    POROUS_OUTER = 1
    INTERFACE = 2


# edge_tags value for interior edges
NO_TAG = -1

SIDES = ("bottom", "right", "top", "left")


@dataclass(frozen=True)
class Rect:
    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangle mesh.

    ``tri_edges[t, i]`` is a global edge id: local edge 0 joins vertices
    (0, 1), edge 1 joins (1, 2), edge 2 joins (2, 0). This is also the order
    of the P2 midpoint DOFs.
    """

    nodes: np.ndarray  # (n_nodes, 2)
    triangles: np.ndarray  # (n_tri, 3), counterclockwise
    edges: np.ndarray  # (n_edges, 2), sorted node pairs
    edge_tags: np.ndarray  # (n_edges,), BoundaryTag value or NO_TAG
    tri_edges: np.ndarray = field(repr=False)  # (n_tri, 3)

    def __post_init__(self):
        for arr in (self.nodes, self.triangles, self.edges, self.edge_tags, self.tri_edges):
            arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_lengths(self) -> np.ndarray:
        d = self.nodes[self.edges[:, 1]] - self.nodes[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def diameter(self) -> float:
        """Largest edge length, the mesh size h."""
        return float(self.edge_lengths().max())

    def tagged_edges(self, tag: BoundaryTag) -> np.ndarray:
        return np.flatnonzero(self.edge_tags == int(tag))


@dataclass(frozen=True, eq=False)
class CoupledMesh:
    fluid: Mesh
    porous: Mesh
    # (n_interface, 2): fluid edge id, porous edge id
    interface_pairs: np.ndarray

    @property
    def interface_length(self) -> float:
        return float(self.fluid.edge_lengths()[self.interface_pairs[:, 0]].sum())


def _edges_from_triangles(triangles: np.ndarray):
    local = triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 3, 2)
    pairs = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
    tri_edges = inverse.reshape(-1, 3)
    return edges, tri_edges, counts


def build_rect_mesh(
    rect: Rect,
    nx: int,
    ny: int,
    side_tags: Mapping[str, BoundaryTag] | None = None,
    default_tag: BoundaryTag = BoundaryTag.FLUID_OUTER,
) -> Mesh:
    """Uniform grid of ``nx * ny`` cells, each split along its SW-NE diagonal.

    ``side_tags`` maps any of ``bottom/right/top/left`` to a tag; unnamed sides
    get ``default_tag``.
    """
    if int(nx) < 1 or int(ny) < 1:
        raise ValueError(f"need nx >= 1 and ny >= 1, got nx={nx}, ny={ny}")
    nx, ny = int(nx), int(ny)
    side_tags = dict(side_tags or {})
    unknown = set(side_tags) - set(SIDES)
    if unknown:
        raise ValueError(f"unknown side names {sorted(unknown)}")

    xs = np.linspace(rect.x0, rect.x1, nx + 1)
    ys = np.linspace(rect.y0, rect.y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
    n00 = (jj * (nx + 1) + ii).ravel()
    n10, n01 = n00 + 1, n00 + nx + 1
    n11 = n01 + 1
    lower = np.column_stack([n00, n10, n11])
    upper = np.column_stack([n00, n11, n01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)

    edges, tri_edges, counts = _edges_from_triangles(triangles)
    tags = np.full(len(edges), NO_TAG, dtype=np.int64)
    gi = edges % (nx + 1)
    gj = edges // (nx + 1)
    on_side = {
        "bottom": (gj == 0).all(axis=1),
        "top": (gj == ny).all(axis=1),
        "left": (gi == 0).all(axis=1),
        "right": (gi == nx).all(axis=1),
    }
    for side in SIDES:
        tags[on_side[side]] = int(side_tags.get(side, default_tag))
    boundary = counts == 1
    if not np.array_equal(boundary, tags != NO_TAG):
        raise RuntimeError("boundary edge detection disagrees with triangle adjacency")
    return Mesh(nodes=nodes, triangles=triangles, edges=edges, edge_tags=tags, tri_edges=tri_edges)


def _default_ny(n: int, rect: Rect, width: float) -> int:
    return max(1, int(round(n * rect.height / width)))


def build_coupled_mesh(
    fluid: Rect,
    porous: Rect,
    n: int,
    ny_fluid: int | None = None,
    ny_porous: int | None = None,
) -> CoupledMesh:
    """Fluid rectangle stacked on the porous one, ``n`` cells along the interface.

    Vertical subdivisions default to roughly square cells.
    """
    if fluid.y0 != porous.y1 or fluid.x0 != porous.x0 or fluid.x1 != porous.x1:
        raise ValueError(
            "fluid must sit directly on top of the porous rectangle with identical x-extent"
        )
    if int(n) < 1:
        raise ValueError(f"need n >= 1, got {n}")
    ny_fluid = ny_fluid or _default_ny(n, fluid, fluid.width)
    ny_porous = ny_porous or _default_ny(n, porous, porous.width)
    fmesh = build_rect_mesh(
        fluid, n, ny_fluid, {"bottom": BoundaryTag.INTERFACE}, BoundaryTag.FLUID_OUTER
    )
    pmesh = build_rect_mesh(
        porous, n, ny_porous, {"top": BoundaryTag.INTERFACE}, BoundaryTag.POROUS_OUTER
    )

    fe = fmesh.tagged_edges(BoundaryTag.INTERFACE)
    pe = pmesh.tagged_edges(BoundaryTag.INTERFACE)
    if len(fe) != len(pe):
        raise RuntimeError("interface edge counts differ between subdomains")
    fkey = fmesh.nodes[fmesh.edges[fe]][:, :, 0].min(axis=1)
    pkey = pmesh.nodes[pmesh.edges[pe]][:, :, 0].min(axis=1)
    pairs = np.column_stack([fe[np.argsort(fkey)], pe[np.argsort(pkey)]])
    fcoords = np.sort(fmesh.nodes[fmesh.edges[pairs[:, 0]]], axis=1)
    pcoords = np.sort(pmesh.nodes[pmesh.edges[pairs[:, 1]]], axis=1)
    if not np.array_equal(fcoords, pcoords):
        raise RuntimeError("interface nodes of the two subdomains do not coincide")
    return CoupledMesh(fluid=fmesh, porous=pmesh, interface_pairs=pairs)
