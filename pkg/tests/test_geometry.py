import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stokes_darcy.geometry import NO_TAG, BoundaryTag, Rect, build_coupled_mesh, build_rect_mesh


def test_unit_square_single_cell():
    m = build_rect_mesh(Rect(0, 1, 0, 1), 1, 1)
    assert (m.n_nodes, m.n_triangles, m.n_edges) == (4, 2, 5)


def test_counts_on_wide_rectangle():
    m = build_rect_mesh(Rect(0, math.pi, 0, 1), 2, 1)
    assert m.n_nodes == 6
    assert m.n_triangles == 4


@pytest.mark.parametrize("nx, ny", [(0, 1), (1, 0), (-2, 3)])
def test_zero_subdivisions_rejected(nx, ny):
    with pytest.raises(ValueError):
        build_rect_mesh(Rect(0, 1, 0, 1), nx, ny)


def test_degenerate_rect_rejected():
    with pytest.raises(ValueError):
        Rect(1, 1, 0, 1)


def test_unknown_side_rejected():
    with pytest.raises(ValueError):
        build_rect_mesh(Rect(0, 1, 0, 1), 1, 1, {"north": BoundaryTag.INTERFACE})


def test_coupled_pairs_count():
    cm = build_coupled_mesh(Rect(0, 1, 1, 2), Rect(0, 1, 0, 1), 4)
    assert len(cm.interface_pairs) == 4
    assert cm.interface_length == pytest.approx(1.0)


def test_test1_interface_endpoints_bitwise_equal():
    cm = build_coupled_mesh(Rect(0, math.pi, 0, 1), Rect(0, math.pi, -1, 0), 8)
    fe, pe = cm.interface_pairs.T
    fnodes = cm.fluid.nodes[cm.fluid.edges[fe]]
    pnodes = cm.porous.nodes[cm.porous.edges[pe]]
    assert np.array_equal(fnodes, pnodes)
    assert np.all(fnodes[..., 1] == 0.0)


def test_mismatched_extents_rejected():
    with pytest.raises(ValueError):
        build_coupled_mesh(Rect(0, 1, 1, 2), Rect(0, 2, 0, 1), 4)
    with pytest.raises(ValueError):
        build_coupled_mesh(Rect(0, 1, 1.5, 2), Rect(0, 1, 0, 1), 4)


def test_tags_on_coupled_mesh():
    cm = build_coupled_mesh(Rect(0, 1, 1, 2), Rect(0, 1, 0, 1), 3)
    pairs = (
        (cm.fluid, BoundaryTag.FLUID_OUTER, BoundaryTag.POROUS_OUTER),
        (cm.porous, BoundaryTag.POROUS_OUTER, BoundaryTag.FLUID_OUTER),
    )
    for mesh, outer, other in pairs:
        gamma = mesh.nodes[mesh.edges[mesh.tagged_edges(BoundaryTag.INTERFACE)]]
        assert np.all(gamma[..., 1] == 1.0)
        assert len(mesh.tagged_edges(BoundaryTag.INTERFACE)) == 3
        assert len(mesh.tagged_edges(outer)) == 3 * 3
        assert len(mesh.tagged_edges(other)) == 0


def test_mesh_arrays_are_read_only():
    m = build_rect_mesh(Rect(0, 1, 0, 1), 2, 2)
    with pytest.raises(ValueError):
        m.nodes[0, 0] = 5.0


rects = st.builds(
    lambda x0, w, y0, hgt: Rect(x0, x0 + w, y0, y0 + hgt),
    st.floats(-5, 5),
    st.floats(0.1, 5),
    st.floats(-5, 5),
    st.floats(0.1, 5),
)


@settings(max_examples=40, deadline=None)
@given(rects, st.integers(1, 12), st.integers(1, 12))
def test_mesh_invariants(rect, nx, ny):
    m = build_rect_mesh(rect, nx, ny)
    areas = m.signed_areas()
    assert np.all(areas > 0)
    assert areas.sum() == pytest.approx(rect.area, rel=1e-12)
    # interior edges are shared by two triangles and untagged, boundary edges by one and tagged
    counts = np.bincount(m.tri_edges.ravel(), minlength=m.n_edges)
    assert set(np.unique(counts)) <= {1, 2}
    assert np.array_equal(counts == 1, m.edge_tags != NO_TAG)
    assert len(m.tagged_edges(BoundaryTag.FLUID_OUTER)) == 2 * (nx + ny)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 10))
def test_diameter_halves_under_refinement(n):
    r = Rect(0, math.pi, 0, 1)
    coarse = build_rect_mesh(r, n, n).diameter()
    fine = build_rect_mesh(r, 2 * n, 2 * n).diameter()
    assert fine == pytest.approx(coarse / 2, rel=1e-12)
