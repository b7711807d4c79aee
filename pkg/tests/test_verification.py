import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stokes_darcy.filtering import reconstruct_provisional
from stokes_darcy.verification import (
    ab_triples,
    analysis_coeffs,
    check_theory,
    g_factored,
    quadratic_bound_check,
    bound_coefficients,
    s_combination,
    s_triple,
    w_combination,
    w_triple,
)

thetas = st.floats(0.01, 0.49)
taus = st.floats(0.05, 3.0)


def test_ab_triples_example():
    A, B, delta = ab_triples(0.3, 1.0)
    assert A.c2 == pytest.approx(1.2)
    assert B.c2 == pytest.approx(0.84)
    assert delta == pytest.approx(0.24)


def test_domain_checked():
    for th, ta in ((0.0, 1.0), (0.5, 1.0), (0.3, 0.0)):
        with pytest.raises(ValueError):
            ab_triples(th, ta)
        with pytest.raises(ValueError):
            analysis_coeffs(th, ta)


@settings(max_examples=200, deadline=None)
@given(thetas, taus)
def test_a_sums_to_zero_and_delta_positive(theta, tau):
    A, B, delta = ab_triples(theta, tau)
    assert abs(A.total) <= 1e-14
    assert B.total == pytest.approx(1.0, abs=1e-14)
    assert delta > 0


def test_analysis_coeffs_examples():
    c = analysis_coeffs(0.3, 1.0)
    assert c.D == pytest.approx(1.68, rel=1e-14)
    assert c.I == pytest.approx(6 / 7, rel=1e-14)
    assert c.H == pytest.approx(1.4)
    assert c.E == pytest.approx(0.28)
    assert c.F == pytest.approx(0.96)
    assert c.G == pytest.approx(1.68 - 6 / 7)
    assert set(c.as_dict()) == set("DHEFGI")


@settings(max_examples=100, deadline=None)
@given(thetas, taus)
def test_identities(theta, tau):
    c = analysis_coeffs(theta, tau)
    lc = bound_coefficients(theta, tau)
    for k in "DHEF":
        assert lc[k] == pytest.approx(getattr(c, k), rel=1e-12)
    assert c.D - c.G == pytest.approx(c.I, rel=1e-12)
    assert g_factored(theta, tau) == pytest.approx(c.G, rel=1e-12)
    assert min(c.as_dict().values()) > 0


def test_bound_examples():
    lhs, rhs, holds = quadratic_bound_check(0.3, 1.0, 0.0, 0.0, 0.0)
    assert lhs == rhs == 0 and holds
    lhs, rhs, holds = quadratic_bound_check(0.3, 1.0, 0.0, 0.0, 1.0)
    assert lhs == pytest.approx(2 * 1.2 * 0.84)
    assert lhs == pytest.approx(2.016)
    assert rhs == pytest.approx(1.68)
    assert holds


@settings(max_examples=200, deadline=None)
@given(thetas, st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
def test_bound_bound_at_constant_steps(theta, v0, v1, v2):
    # with tau = 1 the gap lhs - rhs is a non-negative rank-one form
    lhs, rhs, holds = quadratic_bound_check(theta, 1.0, v0, v1, v2, atol=1e-9)
    assert holds


def test_s_triple_example():
    assert tuple(s_triple(0.3, 1.0)) == pytest.approx((-0.14, -0.02, -0.14))


@settings(max_examples=50, deadline=None)
@given(thetas, taus, st.floats(-5, 5))
def test_s_and_w_constant_fields(theta, tau, c):
    th, t = theta, tau
    s_sum = -(1 - th) * (1 - 2 * th) * t / (t + 1) + ((1 - th) * (1 - 2 * th) * t - th) - (
        1 - th
    ) * (1 - 2 * th) * t**2 / (t + 1)
    assert s_combination(c, c, c, theta, tau) == pytest.approx(c * s_sum, abs=1e-12)
    assert s_triple(theta, tau).total == pytest.approx(-th, abs=1e-12)
    w = w_triple(theta, tau)
    assert w_combination(c, c, c, theta, tau) == pytest.approx(c * (w.c0 + w.c1 + w.c2), abs=1e-12)
    assert w.total == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(thetas, taus, st.integers(0, 2**32 - 1))
def test_triples_match_filter_reconstruction(theta, tau, seed):
    y_m1, y_m, y_new = np.random.default_rng(seed).standard_normal((3, 5))
    A, B, _ = ab_triples(theta, tau)
    y_hat = reconstruct_provisional(y_new, y_m, y_m1, theta, tau)
    assert np.allclose(A.apply(y_m1, y_m, y_new), y_hat - y_m, atol=1e-12)
    assert np.allclose(B.apply(y_m1, y_m, y_new), (1 - theta) * y_hat + theta * y_m, atol=1e-12)


def test_vectorized_over_grids():
    th, ta = np.meshgrid(np.linspace(0.1, 0.4, 4), np.linspace(0.5, 2, 3))
    c = analysis_coeffs(th, ta)
    assert c.D.shape == (3, 4)
    assert c.D[0, 0] == pytest.approx(analysis_coeffs(0.1, 0.5).D)


def test_check_theory_report():
    r = check_theory(grid=20, samples=2000, seed=1)
    assert r.identities_hold
    assert r.positive
    lines = r.lines()
    assert lines[0].startswith("check")
    assert any("bound violations" in line for line in lines)
    assert r.passed == (r.bound_violations == 0)
