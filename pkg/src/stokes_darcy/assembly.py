"""Sparse assembly of the Stokes/Darcy bilinear forms and load vectors.

The scalings by ``g`` and ``S0`` are folded into the porous operators here,
so the time steppers only ever add scaled blocks together.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fespace import (
    EDGE_POINTS,
    EDGE_WEIGHTS,
    TRI_POINTS,
    TRI_WEIGHTS,
    FeSpace,
    TraceMap,
    build_space,
    build_trace_map,
    edge_shape_functions,
    shape_functions,
    shape_gradients,
)
from .geometry import CoupledMesh


@dataclass(frozen=True)
class PhysicalCoefficients:
    nu: float = 1.0
    g: float = 1.0
    S0: float = 1.0
    K: np.ndarray = field(default_factory=lambda: np.eye(2))
    alpha: float = 1.0

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        if K.shape == ():
            K = K * np.eye(2)
        object.__setattr__(self, "K", K)
        for name in ("nu", "g", "S0", "alpha"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if K.shape != (2, 2) or not np.allclose(K, K.T):
            raise ValueError("K must be a symmetric 2x2 matrix")
        if np.linalg.eigvalsh(K).min() <= 0:
            raise ValueError("K must be positive definite")

    @property
    def permeability(self) -> np.ndarray:
        return self.K * self.nu / self.g

    @property
    def bjs_coefficient(self) -> float:
        d = 2
        return self.alpha * self.nu * math.sqrt(d) / math.sqrt(np.trace(self.permeability))


def _geometry(space: FeSpace):
    p = space.mesh.nodes[space.mesh.triangles]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)  # (t, 2, 2), columns dxi, deta
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    return J, det


def _physical_gradients(space: FeSpace):
    """Basis gradients at quadrature points, ``(n_tri, n_q, n_local, 2)``, and |det J|."""
    J, det = _geometry(space)
    invJ = np.linalg.inv(J)
    dN = shape_gradients(space.kind, TRI_POINTS[:, 0], TRI_POINTS[:, 1])
    # grad_x N = J^{-T} grad_xi N
    grads = np.einsum("qlr,trc->tqlc", dN, invJ)
    return grads, np.abs(det)


def _scatter(rows_local, cols_local, vals, shape) -> sp.csr_matrix:
    r = np.broadcast_to(rows_local, vals.shape).ravel()
    c = np.broadcast_to(cols_local, vals.shape).ravel()
    return sp.coo_matrix((vals.ravel(), (r, c)), shape=shape).tocsr()


def _scalar_block(space: FeSpace, local: np.ndarray) -> sp.csr_matrix:
    d = space.cell_dofs
    return _scatter(d[:, :, None], d[:, None, :], local, (space.n_scalar, space.n_scalar))


def _replicate(block: sp.spmatrix, components: int) -> sp.csr_matrix:
    if components == 1:
        return block.tocsr()
    return sp.block_diag([block] * components, format="csr")


def assemble_mass(space: FeSpace, weight: float = 1.0) -> sp.csr_matrix:
    N = shape_functions(space.kind, TRI_POINTS[:, 0], TRI_POINTS[:, 1])
    _, det = _geometry(space)
    ref = np.einsum("q,qi,qj->ij", TRI_WEIGHTS, N, N) * 0.5
    local = weight * np.abs(det)[:, None, None] * ref[None]
    return _replicate(_scalar_block(space, local), space.components)


def _laplace_block(space: FeSpace, K: np.ndarray) -> sp.csr_matrix:
    grads, det = _physical_gradients(space)
    local = 0.5 * np.einsum("q,t,tqic,cd,tqjd->tij", TRI_WEIGHTS, det, grads, K, grads, optimize=True)
    return _scalar_block(space, local)


def _interface_mass(trace: TraceMap):
    """Per-edge P2 trace mass matrices, ``(n_edges, 3, 3)``."""
    N = edge_shape_functions(EDGE_POINTS)
    ref = np.einsum("q,qi,qj->ij", EDGE_WEIGHTS, N, N)
    return trace.lengths[:, None, None] * ref[None]


def assemble_bjs(trace: TraceMap, coefficient: float) -> sp.csr_matrix:
    """Tangential slip term ``sum_e coef * (u . tau)(v . tau)`` on the interface."""
    space = trace.fluid_space
    m = _interface_mass(trace)
    rows, cols, vals = [], [], []
    for c in range(2):
        for d in range(2):
            w = coefficient * trace.tangent[:, c] * trace.tangent[:, d]
            rd = space.component_dofs(c, trace.fluid_dofs)
            cd = space.component_dofs(d, trace.fluid_dofs)
            rows.append(np.broadcast_to(rd[:, :, None], m.shape).ravel())
            cols.append(np.broadcast_to(cd[:, None, :], m.shape).ravel())
            vals.append((w[:, None, None] * m).ravel())
    n = space.dof_count
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()


def assemble_stokes_stiffness(
    space: FeSpace, coeffs: PhysicalCoefficients, trace: TraceMap | None = None
) -> sp.csr_matrix:
    """``nu (grad u, grad v)`` plus the Beavers-Joseph-Saffman interface term."""
    A = coeffs.nu * _replicate(_laplace_block(space, np.eye(2)), space.components)
    if trace is not None:
        if trace.fluid_space is not space:
            raise ValueError("trace map belongs to a different velocity space")
        A = A + assemble_bjs(trace, coeffs.bjs_coefficient)
    return A.tocsr()


def assemble_darcy_stiffness(space: FeSpace, coeffs: PhysicalCoefficients) -> sp.csr_matrix:
    return coeffs.g * _laplace_block(space, coeffs.K)


def assemble_divergence(velocity_space: FeSpace, pressure_space: FeSpace) -> sp.csr_matrix:
    """Matrix of ``b(v, q) = -(q, div v)``; rows are pressure DOFs."""
    if velocity_space.mesh is not pressure_space.mesh:
        raise ValueError("velocity and pressure spaces must share a mesh")
    grads, det = _physical_gradients(velocity_space)
    Q = shape_functions(pressure_space.kind, TRI_POINTS[:, 0], TRI_POINTS[:, 1])
    blocks = []
    for c in range(velocity_space.components):
        local = -0.5 * np.einsum("q,t,qi,tqj->tij", TRI_WEIGHTS, det, Q, grads[..., c])
        blocks.append(
            _scatter(
                pressure_space.cell_dofs[:, :, None],
                velocity_space.cell_dofs[:, None, :],
                local,
                (pressure_space.n_scalar, velocity_space.n_scalar),
            )
        )
    return sp.hstack(blocks, format="csr")


def assemble_interface_coupling(trace: TraceMap, g: float = 1.0) -> sp.csr_matrix:
    """Matrix ``C`` with ``v^T C psi = g (psi, v . n_f)_Gamma``; rows are velocity DOFs."""
    fs, ps = trace.fluid_space, trace.porous_space
    m = _interface_mass(trace)
    rows, cols, vals = [], [], []
    for c in range(fs.components):
        rd = fs.component_dofs(c, trace.fluid_dofs)
        rows.append(np.broadcast_to(rd[:, :, None], m.shape).ravel())
        cols.append(np.broadcast_to(trace.porous_dofs[:, None, :], m.shape).ravel())
        vals.append((g * trace.normal[:, c][:, None, None] * m).ravel())
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(fs.dof_count, ps.dof_count),
    ).tocsr()


class LoadAssembler:
    """Load vectors ``weight * (f(., t), v)`` with the quadrature geometry cached.

    ``forcing(x, y, t)`` is evaluated on arrays of quadrature points and returns
    an array of the same shape (scalar) or a ``(2, ...)`` stack (vector).
    """

    def __init__(self, space: FeSpace, weight: float = 1.0):
        self.space = space
        self.N = shape_functions(space.kind, TRI_POINTS[:, 0], TRI_POINTS[:, 1])
        _, det = _geometry(space)
        self.jw = (0.5 * weight) * np.abs(det)[:, None] * TRI_WEIGHTS[None, :]
        self.x, self.y = space.physical_points(TRI_POINTS[:, 0], TRI_POINTS[:, 1])
        self.dofs = space.cell_dofs.ravel()

    def __call__(self, forcing, t: float) -> np.ndarray:
        sp_ = self.space
        f = np.asarray(forcing(self.x, self.y, t), dtype=float)
        f = np.broadcast_to(f, (sp_.components,) + self.x.shape) if sp_.components > 1 else np.broadcast_to(f, self.x.shape)[None]
        out = [
            np.bincount(self.dofs, ((f[c] * self.jw) @ self.N).ravel(), minlength=sp_.n_scalar)
            for c in range(sp_.components)
        ]
        return np.concatenate(out)


def assemble_load(space: FeSpace, forcing, t: float, weight: float = 1.0) -> np.ndarray:
    """Load vector of ``weight * (f(., t), v)``; see :class:`LoadAssembler`."""
    return LoadAssembler(space, weight)(forcing, t)


@dataclass(frozen=True, eq=False)
class SystemForms:
    """All assembled operators of one coupled discretization."""

    coupled: CoupledMesh
    coeffs: PhysicalCoefficients
    velocity: FeSpace
    pressure: FeSpace
    head: FeSpace
    trace: TraceMap
    Mf: sp.csr_matrix
    Mp: sp.csr_matrix  # scaled by g * S0
    Af: sp.csr_matrix  # viscous + BJS
    Ap: sp.csr_matrix  # scaled by g
    B: sp.csr_matrix  # (n_p, n_u)
    C: sp.csr_matrix  # (n_u, n_phi), scaled by g
    # unscaled L2 mass matrices, used for error-estimator norms
    Mu_l2: sp.csr_matrix = field(repr=False, default=None)
    Mphi_l2: sp.csr_matrix = field(repr=False, default=None)

    @property
    def sizes(self) -> dict:
        return {
            "velocity": self.velocity.dof_count,
            "pressure": self.pressure.dof_count,
            "head": self.head.dof_count,
        }


def build_forms(coupled: CoupledMesh, coeffs: PhysicalCoefficients | None = None) -> SystemForms:
    coeffs = coeffs or PhysicalCoefficients()
    velocity = build_space(coupled.fluid, "P2", 2)
    pressure = build_space(coupled.fluid, "P1", 1)
    head = build_space(coupled.porous, "P2", 1)
    trace = build_trace_map(velocity, head, coupled)
    Mu = assemble_mass(velocity)
    Mphi = assemble_mass(head)
    return SystemForms(
        coupled=coupled,
        coeffs=coeffs,
        velocity=velocity,
        pressure=pressure,
        head=head,
        trace=trace,
        Mf=Mu,
        Mp=(coeffs.g * coeffs.S0) * Mphi,
        Af=assemble_stokes_stiffness(velocity, coeffs, trace),
        Ap=assemble_darcy_stiffness(head, coeffs),
        B=assemble_divergence(velocity, pressure),
        C=assemble_interface_coupling(trace, coeffs.g),
        Mu_l2=Mu,
        Mphi_l2=Mphi,
    )
