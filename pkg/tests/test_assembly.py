import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from stokes_darcy.assembly import (
    PhysicalCoefficients,
    assemble_darcy_stiffness,
    assemble_divergence,
    assemble_interface_coupling,
    assemble_load,
    assemble_mass,
    assemble_stokes_stiffness,
    build_forms,
)
from stokes_darcy.fespace import boundary_dofs, build_space, build_trace_map
from stokes_darcy.geometry import Rect, build_coupled_mesh, build_rect_mesh
from stokes_darcy.linalg import EliminatedSystem


def _square_space(kind="P2", n=2, components=1):
    return build_space(build_rect_mesh(Rect(0, 1, 0, 1), n, n), kind, components)


def _taylor_hood(n=2):
    mesh = build_rect_mesh(Rect(0, 1, 0, 1), n, n)
    return build_space(mesh, "P2", 2), build_space(mesh, "P1")


def _const(c):
    return lambda x, y: np.stack([np.full_like(x, c[0]), np.full_like(x, c[1])])


def test_coefficients_defaults():
    c = PhysicalCoefficients()
    assert c.bjs_coefficient == pytest.approx(1.0)
    assert np.array_equal(c.K, np.eye(2))
    assert np.array_equal(PhysicalCoefficients(K=3.0).K, 3 * np.eye(2))


@pytest.mark.parametrize(
    "kwargs",
    [{"nu": 0}, {"g": -1}, {"S0": 0}, {"alpha": 0}, {"K": [[1, 2], [0, 1]]}, {"K": -np.eye(2)}],
)
def test_coefficients_validated(kwargs):
    with pytest.raises(ValueError):
        PhysicalCoefficients(**kwargs)


@pytest.mark.parametrize("n", [1, 2, 4])
def test_mass_sums_to_area(n):
    for kind in ("P1", "P2"):
        M = assemble_mass(_square_space(kind, n))
        assert M.sum() == pytest.approx(1.0, abs=1e-12)
        assert abs(M - M.T).max() < 1e-15


def test_mass_weight_one_is_identical():
    V = _square_space()
    c = PhysicalCoefficients()
    assert abs(assemble_mass(V, c.g * c.S0) - assemble_mass(V)).max() == 0.0


def test_mass_is_positive_definite():
    M = assemble_mass(_square_space()).toarray()
    assert np.linalg.eigvalsh(M).min() > 0


def test_stokes_form_on_constants(unit_forms):
    f = unit_forms
    for c, expected in (((1.0, 0.0), 1.0), ((0.0, 1.0), 0.0)):
        v = f.velocity.interpolate(_const(c))
        assert v @ (f.Af @ v) == pytest.approx(expected, abs=1e-13)


def test_stokes_form_coefficient_scaling(unit_forms):
    f = unit_forms
    base = PhysicalCoefficients()
    # doubling nu and rescaling alpha keeps the slip coefficient
    scaled = PhysicalCoefficients(nu=2.0, alpha=1 / math.sqrt(2))
    assert scaled.bjs_coefficient == pytest.approx(base.bjs_coefficient)
    vol1 = assemble_stokes_stiffness(f.velocity, base)
    vol2 = assemble_stokes_stiffness(f.velocity, scaled)
    assert abs(vol2 - 2 * vol1).max() < 1e-12
    full1 = assemble_stokes_stiffness(f.velocity, base, f.trace)
    full2 = assemble_stokes_stiffness(f.velocity, scaled, f.trace)
    assert abs((full2 - vol2) - (full1 - vol1)).max() < 1e-12


def test_stokes_form_symmetric(unit_forms):
    A = unit_forms.Af
    assert abs(A - A.T).max() < 1e-13


def test_darcy_form():
    H = _square_space()
    c = PhysicalCoefficients()
    A = assemble_darcy_stiffness(H, c)
    x = H.interpolate(lambda x, y: x)
    assert x @ (A @ x) == pytest.approx(1.0, abs=1e-13)
    one = np.ones(H.dof_count)
    assert np.abs(A @ one).max() < 1e-13
    A2 = assemble_darcy_stiffness(H, PhysicalCoefficients(K=2.0))
    assert abs(A2 - 2 * A).max() < 1e-13


def test_divergence_form():
    V, Q = _taylor_hood()
    B = assemble_divergence(V, Q)
    q = np.ones(Q.dof_count)
    assert q @ (B @ V.interpolate(lambda x, y: np.stack([x, 0 * y]))) == pytest.approx(-1.0, abs=1e-13)
    assert q @ (B @ V.interpolate(lambda x, y: np.stack([0 * x, y]))) == pytest.approx(-1.0, abs=1e-13)
    assert np.abs(B @ V.interpolate(_const((2.0, -3.0)))).max() < 1e-13


def test_divergence_requires_shared_mesh():
    with pytest.raises(ValueError):
        assemble_divergence(_square_space(components=2), _square_space("P1", n=3))


def test_interface_coupling(unit_forms):
    f = unit_forms
    psi = np.ones(f.head.dof_count)
    v = f.velocity.interpolate(_const((0.0, 1.0)))
    assert v @ (f.C @ psi) == pytest.approx(-1.0, abs=1e-13)
    tang = f.velocity.interpolate(_const((1.0, 0.0)))
    assert np.abs(tang @ f.C).max() < 1e-14
    assert np.abs(f.C @ np.zeros(f.head.dof_count)).max() == 0.0


def test_interface_coupling_quadratic_integrand(unit_forms):
    # v . n_f = -x, psi = x: integral over (0,1) of -x^2 is -1/3
    f = unit_forms
    v = f.velocity.interpolate(lambda x, y: np.stack([0 * x, x]))
    psi = f.head.interpolate(lambda x, y: x)
    assert v @ (f.C @ psi) == pytest.approx(-1 / 3, abs=1e-13)
    C2 = assemble_interface_coupling(f.trace, g=2.0)
    assert abs(C2 - 2 * f.C).max() < 1e-15


def test_load_vectors():
    H = _square_space()
    assert np.all(assemble_load(H, lambda x, y, t: 0 * x, 0.0) == 0)
    assert assemble_load(H, lambda x, y, t: 1.0 + 0 * x, 0.0).sum() == pytest.approx(1.0, abs=1e-12)
    V = _square_space(components=2)
    assert np.all(assemble_load(V, lambda x, y, t: np.zeros((2,) + x.shape), 0.0) == 0)


def test_load_matches_mass_product():
    H = _square_space(n=3)
    poly = lambda x, y, t: 1 + 2 * x - y + x * y + t * x**2 - 3 * y**2
    b = assemble_load(H, poly, 0.7, weight=2.0)
    assert np.allclose(b, 2.0 * assemble_mass(H) @ H.interpolate(poly, 0.7), atol=1e-12, rtol=0)
    V = _square_space(n=3, components=2)
    vec = lambda x, y, t: np.stack([x * y, 1 - y**2])
    assert np.allclose(assemble_load(V, vec, 0.0), assemble_mass(V) @ V.interpolate(vec, 0.0), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_interface_term_antisymmetric(unit_forms, seed):
    rng = np.random.default_rng(seed)
    f = unit_forms
    v = rng.standard_normal(f.velocity.dof_count)
    psi = rng.standard_normal(f.head.dof_count)
    # the monolithic operator carries +C in the velocity row and -C^T in the head row
    a_gamma = v @ (f.C @ psi) - psi @ (f.C.T @ v)
    assert abs(a_gamma) <= 1e-12


def test_coercivity_on_small_mesh():
    coupled = build_coupled_mesh(Rect(0, 1, 1, 2), Rect(0, 1, 0, 1), 1)
    f = build_forms(coupled)
    from stokes_darcy.stepping import Problem

    zero = lambda x, y, t: 0 * x
    prob = Problem(f, zero, zero, zero, zero)
    K = sp.block_diag([f.Af, f.Ap]).toarray()
    fixed = np.concatenate([prob.fixed_u, f.velocity.dof_count + prob.fixed_phi])
    free = np.setdiff1d(np.arange(K.shape[0]), fixed)
    assert np.linalg.eigvalsh(K[np.ix_(free, free)]).min() > 0


@pytest.mark.parametrize("n", [1, 2, 4])
def test_taylor_hood_saddle_point_nonsingular(n):
    V, Q = _taylor_hood(n)
    A = assemble_stokes_stiffness(V, PhysicalCoefficients())
    B = assemble_divergence(V, Q)
    K = sp.bmat([[A, B.T], [B, None]])
    bd = boundary_dofs(V)
    fixed = np.concatenate([bd, V.n_scalar + bd, [V.dof_count]])
    EliminatedSystem(K, fixed)


def test_trace_space_mismatch_rejected(unit_forms):
    other = build_space(unit_forms.coupled.fluid, "P2", 2)
    with pytest.raises(ValueError):
        assemble_stokes_stiffness(other, PhysicalCoefficients(), unit_forms.trace)


def test_system_forms_scalings():
    coupled = build_coupled_mesh(Rect(0, 1, 1, 2), Rect(0, 1, 0, 1), 2)
    c = PhysicalCoefficients(g=2.0, S0=0.5, K=3.0)
    f = build_forms(coupled, c)
    ref = build_forms(coupled)
    assert abs(f.Mp - ref.Mp).max() < 1e-15  # g S0 = 1
    assert abs(f.Ap - 6 * ref.Ap).max() < 1e-12
    assert abs(f.C - 2 * ref.C).max() < 1e-15
    assert f.sizes == {"velocity": 2 * 25, "pressure": 9, "head": 25}
    tr = build_trace_map(f.velocity, f.head, coupled)
    assert len(tr) == 2
