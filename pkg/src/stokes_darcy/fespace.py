"""Lagrange P1/P2 spaces on triangles, quadrature rules and interface traces.

Scalar DOF numbering: P1 DOFs are the mesh nodes. P2 DOFs are the nodes
followed by one DOF per edge (its midpoint), in mesh edge order. Vector
spaces are blocked by component: DOF ``c * n_scalar + i`` is component ``c``
of scalar DOF ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import NO_TAG, BoundaryTag, CoupledMesh, Mesh

# 6-point degree-4 rule on the reference triangle (0,0),(1,0),(0,1); weights sum to 1
_A1, _B1, _W1 = 0.445948490915965, 0.108103018168070, 0.223381589678011
_A2, _B2, _W2 = 0.091576213509771, 0.816847572980459, 0.109951743655322
TRI_POINTS = np.array(
    [
        [_A1, _A1], [_B1, _A1], [_A1, _B1],
        [_A2, _A2], [_B2, _A2], [_A2, _B2],
    ]
)
TRI_WEIGHTS = np.array([_W1] * 3 + [_W2] * 3)

# 3-point Gauss-Legendre on [0, 1]; exact to degree 5
EDGE_POINTS = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
EDGE_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0


def shape_functions(kind: str, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Reference basis values, shape ``(n_points, n_local)``."""
    l0, l1, l2 = 1.0 - xi - eta, xi, eta
    if kind == "P1":
        return np.stack([l0, l1, l2], axis=-1)
    if kind == "P2":
        return np.stack(
            [
                l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0,
            ],
            axis=-1,
        )
    raise ValueError(f"unknown element kind {kind!r}")


def shape_gradients(kind: str, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Reference basis gradients, shape ``(n_points, n_local, 2)``."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    l0, l1, l2 = 1.0 - xi - eta, xi, eta
    # d(lambda_i)/d(xi, eta)
    g0, g1, g2 = np.array([-1.0, -1.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])
    if kind == "P1":
        out = np.broadcast_to(np.stack([g0, g1, g2]), xi.shape + (3, 2))
        return np.array(out)
    if kind == "P2":
        L = [l0, l1, l2]
        G = [g0, g1, g2]
        cols = [(4 * L[i] - 1)[..., None] * G[i] for i in range(3)]
        for i, j in ((0, 1), (1, 2), (2, 0)):
            cols.append(4 * (L[i][..., None] * G[j] + L[j][..., None] * G[i]))
        return np.stack(cols, axis=-2)
    raise ValueError(f"unknown element kind {kind!r}")


def edge_shape_functions(s: np.ndarray) -> np.ndarray:
    """Quadratic Lagrange basis on [0, 1] with nodes (0, 1, 1/2)."""
    return np.stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)], axis=-1)


@dataclass(frozen=True, eq=False)
class FeSpace:
    mesh: Mesh
    kind: str
    components: int
    n_scalar: int
    cell_dofs: np.ndarray  # (n_tri, n_local) scalar DOFs
    coords: np.ndarray  # (n_scalar, 2) support points

    @property
    def dof_count(self) -> int:
        return self.components * self.n_scalar

    @property
    def n_local(self) -> int:
        return self.cell_dofs.shape[1]

    def component_dofs(self, c: int, scalar_dofs=None) -> np.ndarray:
        if scalar_dofs is None:
            scalar_dofs = np.arange(self.n_scalar)
        return c * self.n_scalar + np.asarray(scalar_dofs)

    def edge_dofs(self, edge_ids) -> np.ndarray:
        """Scalar DOFs on the given edges: ``(n, 2)`` for P1, ``(n, 3)`` for P2
        (endpoints in ``mesh.edges`` order, then the midpoint)."""
        edge_ids = np.asarray(edge_ids)
        ends = self.mesh.edges[edge_ids]
        if self.kind == "P1":
            return ends
        return np.column_stack([ends, self.mesh.n_nodes + edge_ids])

    def interpolate(self, func, *args) -> np.ndarray:
        """Nodal interpolant of ``func(x, y, *args)``.

        ``func`` returns an array of shape ``(n,)`` for scalar spaces or
        ``(components, n)`` for vector spaces.
        """
        vals = np.asarray(func(self.coords[:, 0], self.coords[:, 1], *args), dtype=float)
        shape = (self.components, self.n_scalar) if self.components > 1 else (self.n_scalar,)
        return np.broadcast_to(vals, shape).ravel().copy()

    def evaluate(self, values: np.ndarray, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
        """Field values at reference points of every cell, shape
        ``(components, n_tri, n_points)``."""
        N = shape_functions(self.kind, xi, eta)
        v = np.asarray(values).reshape(self.components, self.n_scalar)
        return np.einsum("ctl,ql->ctq", v[:, self.cell_dofs], N)

    def physical_points(self, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
        """Physical coordinates of reference points, shape ``(2, n_tri, n_points)``."""
        p = self.mesh.nodes[self.mesh.triangles]
        N = shape_functions("P1", xi, eta)
        return np.einsum("tlc,ql->ctq", p, N)


def build_space(mesh: Mesh, kind: str = "P2", components: int = 1) -> FeSpace:
    if kind not in ("P1", "P2"):
        raise ValueError(f"unknown element kind {kind!r}")
    if components not in (1, 2):
        raise ValueError(f"components must be 1 or 2, got {components}")
    if kind == "P1":
        cell_dofs = np.array(mesh.triangles)
        coords = np.array(mesh.nodes)
    else:
        cell_dofs = np.hstack([mesh.triangles, mesh.n_nodes + mesh.tri_edges])
        mid = 0.5 * (mesh.nodes[mesh.edges[:, 0]] + mesh.nodes[mesh.edges[:, 1]])
        coords = np.vstack([mesh.nodes, mid])
    cell_dofs.setflags(write=False)
    coords.setflags(write=False)
    return FeSpace(mesh, kind, components, len(coords), cell_dofs, coords)


@dataclass(frozen=True, eq=False)
class TraceMap:
    """Matched interface edges.

    Row ``e`` of ``fluid_dofs``/``porous_dofs`` lists the scalar DOFs at
    (left end, right end, midpoint) of interface edge ``e``; ``start`` and
    ``end`` are the edge endpoints in the same order. Velocity DOFs of
    component ``c`` are ``fluid_space.component_dofs(c, fluid_dofs)``.
    """

    fluid_space: FeSpace
    porous_space: FeSpace
    start: np.ndarray  # (n_edges, 2)
    end: np.ndarray  # (n_edges, 2)
    fluid_dofs: np.ndarray  # (n_edges, 3)
    porous_dofs: np.ndarray  # (n_edges, 3)
    normal: np.ndarray  # (n_edges, 2), outward from the fluid
    tangent: np.ndarray  # (n_edges, 2)

    def __len__(self) -> int:
        return len(self.fluid_dofs)

    @property
    def lengths(self) -> np.ndarray:
        d = self.end - self.start
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def porous_normal(self) -> np.ndarray:
        return -self.normal


def _ordered_edge_dofs(space: FeSpace, edge_ids) -> np.ndarray:
    dofs = np.array(space.edge_dofs(edge_ids))
    swap = space.coords[dofs[:, 0], 0] > space.coords[dofs[:, 1], 0]
    dofs[swap, :2] = dofs[swap, 1::-1]
    return dofs


def build_trace_map(fluid_space: FeSpace, porous_space: FeSpace, coupled: CoupledMesh) -> TraceMap:
    if fluid_space.mesh is not coupled.fluid or porous_space.mesh is not coupled.porous:
        raise ValueError("spaces must be built on the coupled mesh's subdomains")
    if fluid_space.kind != "P2" or porous_space.kind != "P2":
        raise ValueError("interface traces need P2 spaces on both sides")
    fe, pe = coupled.interface_pairs[:, 0], coupled.interface_pairs[:, 1]
    fd = _ordered_edge_dofs(fluid_space, fe)
    pd = _ordered_edge_dofs(porous_space, pe)
    fc = fluid_space.coords[fd]
    pc = porous_space.coords[pd]
    if not np.array_equal(fc, pc):
        raise RuntimeError("unmatched interface edge: trace DOF coordinates differ")

    start, end = fc[:, 0], fc[:, 1]
    d = end - start
    tangent = d / np.hypot(d[:, 0], d[:, 1])[:, None]
    # outward from the fluid: points away from the fluid triangle touching the edge
    fmesh = fluid_space.mesh
    owner = _edge_owner(fmesh, fe)
    centroid = fmesh.nodes[fmesh.triangles[owner]].mean(axis=1)
    normal = np.column_stack([tangent[:, 1], -tangent[:, 0]])
    flip = np.einsum("ij,ij->i", normal, centroid - start) > 0
    normal[flip] *= -1
    # tangent is the normal rotated counterclockwise by 90 degrees
    tangent = np.column_stack([-normal[:, 1], normal[:, 0]])
    return TraceMap(fluid_space, porous_space, start, end, fd, pd, normal, tangent)


def _edge_owner(mesh: Mesh, edge_ids: np.ndarray) -> np.ndarray:
    tri_of_edge = np.full(mesh.n_edges, -1)
    tri_of_edge[mesh.tri_edges.ravel()] = np.repeat(np.arange(mesh.n_triangles), 3)
    return tri_of_edge[edge_ids]


def dirichlet_dofs(space: FeSpace, tag: BoundaryTag) -> np.ndarray:
    """Sorted DOFs (all components) whose support points lie on edges with ``tag``.

    The endpoints of the interface lie on outer edges too and are returned for
    the outer tags: test functions must vanish on the closure of the outer
    boundary, otherwise the dropped wall flux makes the scheme inconsistent
    at the corners. Interface DOFs strictly inside the interface never are.
    """
    mesh = space.mesh
    tagged = mesh.tagged_edges(BoundaryTag(tag))
    scalar = np.unique(space.edge_dofs(tagged)) if len(tagged) else np.empty(0, dtype=int)
    return np.concatenate([space.component_dofs(c, scalar) for c in range(space.components)]).astype(np.int64)


def boundary_dofs(space: FeSpace) -> np.ndarray:
    """All scalar DOFs on any tagged edge."""
    edges = np.flatnonzero(space.mesh.edge_tags != NO_TAG)
    return np.unique(space.edge_dofs(edges))
