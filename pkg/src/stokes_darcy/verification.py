"""Numerical checks of the coefficient algebra behind the stability analysis.

The triples act on ``(y^{m-1}, y^m, y^{m+1})``. In terms of the provisional
value ``yhat`` recovered from filtered data, ``A(y) = yhat - y^m`` and
``B(y) = (1 - theta) yhat + theta y^m``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class CoeffTriple(NamedTuple):
    c0: float  # weight on y^{m-1}
    c1: float  # weight on y^m
    c2: float  # weight on y^{m+1}

    def apply(self, y_m1, y_m, y_new):
        return self.c0 * np.asarray(y_m1) + self.c1 * np.asarray(y_m) + self.c2 * np.asarray(y_new)

    @property
    def total(self) -> float:
        return self.c0 + self.c1 + self.c2


def _check(theta, tau):
    th, ta = np.asarray(theta, dtype=float), np.asarray(tau, dtype=float)
    if np.any((th <= 0) | (th >= 0.5)):
        raise ValueError("theta must lie in (0, 1/2)")
    if np.any(ta <= 0):
        raise ValueError("tau must be positive")


def ab_triples(theta, tau) -> tuple[CoeffTriple, CoeffTriple, float]:
    """The A and B triples and ``delta = B_2 - A_2 / 2``; vectorizes over arrays."""
    _check(theta, tau)
    th, t = theta, tau
    A = CoeffTriple(
        (1 - 2 * th) * t**2 / (t + 1),
        -((1 - 2 * th) * t + 1),
        (2 * (1 - th) * t + 1) / (t + 1),
    )
    B = CoeffTriple(
        (1 - th) * (1 - 2 * th) * t**2 / (t + 1),
        -((1 - th) * (1 - 2 * th) * t - th),
        (2 * (1 - th) ** 2 * t + 1 - th) / (t + 1),
    )
    return A, B, B.c2 - A.c2 / 2


@dataclass(frozen=True)
class AnalysisCoefficients:
    D: float
    H: float
    E: float
    F: float
    G: float
    I: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in "DHEFGI"}


def analysis_coeffs(theta, tau) -> AnalysisCoefficients:
    """The six rational coefficient functions, each evaluated from its own closed form."""
    _check(theta, tau)
    th, t = theta, tau
    den = 2 * (t + 1) ** 2
    D = (2 * (1 - th) * (5 - 6 * th) * t**2 + (4 * th**2 - 16 * th + 11) * t + 3 - 2 * th) / den
    H = (2 * (3 - 4 * th) * t**2 + 8 * (1 - th) * t + 2) / den
    E = (2 * (1 - 2 * th) * (2 - 3 * th) * t**2 + (1 - 2 * th) * (3 - 2 * th) * t + 1 - 2 * th) / den
    F = (
        12 * (1 - th) * (1 - 2 * th) * t**2 + 2 * (1 - 2 * th) * (5 - 2 * th) * t + 2 * (1 - 2 * th)
    ) / den
    G = (
        (6 * (1 - th) * (1 - 2 * th) * t**2 + (1 - 2 * th) * (5 - 2 * th) * t + 1 - 2 * th)
        / den
        * (6 * (1 - th) * t**2 + (5 - 2 * th) * t + 1)
        / (2 * (2 - 3 * th) * t**2 + (3 - 2 * th) * t + 1)
    )
    I = (t + 1) * (2 * t * th - 2 * t - 1) / (6 * t**2 * th - 4 * t**2 + 2 * t * th - 3 * t - 1)
    return AnalysisCoefficients(D, H, E, F, G, I)


def g_factored(theta, tau):
    """The factored closed form of G, an independent check on the product form."""
    th, t = theta, tau
    return (
        (3 * t + 1) ** 2
        * (2 * t * th - 2 * t - 1) ** 2
        * (2 * th - 1)
        / (2 * (t + 1) ** 2 * (6 * t**2 * th - 4 * t**2 + 2 * t * th - 3 * t - 1))
    )


def bound_coefficients(theta, tau) -> dict:
    """D, H, E, F rebuilt from ``A_2`` and ``delta``: the quadratic-form bound coefficients."""
    A, _, delta = ab_triples(theta, tau)
    a2 = A.c2
    return {
        "D": a2**2 + delta,
        "H": 2 * a2 - 1,
        "E": (a2 - 1) ** 2 + delta,
        "F": 2 * (a2 * (a2 - 1) + delta),
    }


def quadratic_bound_check(theta, tau, v0, v1, v2, atol: float = 1e-12):
    """``(lhs, rhs, holds)`` of the quadratic-form lower bound; vectorizes."""
    A, B, _ = ab_triples(theta, tau)
    c = analysis_coeffs(theta, tau)
    lhs = 2 * A.apply(v0, v1, v2) * B.apply(v0, v1, v2)
    rhs = c.D * v2**2 - c.H * v1**2 - c.E * v0**2 - c.F * (v2 * v1 - v1 * v0)
    return lhs, rhs, lhs >= rhs - atol


def s_triple(theta, tau) -> CoeffTriple:
    _check(theta, tau)
    th, t = theta, tau
    return CoeffTriple(
        -(1 - th) * (1 - 2 * th) * t**2 / (t + 1),
        (1 - th) * (1 - 2 * th) * t - th,
        -(1 - th) * (1 - 2 * th) * t / (t + 1),
    )


def w_triple(theta, tau) -> CoeffTriple:
    _check(theta, tau)
    th, t = theta, tau
    return CoeffTriple(
        -(2 * (1 - th) ** 2 * t**2 + (1 - th) * t) / (t + 1),
        2 * (1 - th) ** 2 * t + 1 - th,
        -(2 * (1 - th) ** 2 * t + 1 - th) / (t + 1),
    )


def s_combination(f_m1, f_m, f_new, theta: float, tau: float):
    return s_triple(theta, tau).apply(f_m1, f_m, f_new)


def w_combination(e_m1, e_m, e_new, theta: float, tau: float):
    return w_triple(theta, tau).apply(e_m1, e_m, e_new)


def _relative_gap(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), np.finfo(float).tiny)))


@dataclass(frozen=True)
class TheoryReport:
    identity_gaps: dict
    min_values: dict
    bound_samples: int
    bound_violations: int
    worst_bound_gap: float
    rtol: float

    @property
    def identities_hold(self) -> bool:
        return all(g <= self.rtol for g in self.identity_gaps.values())

    @property
    def positive(self) -> bool:
        return all(v > 0 for v in self.min_values.values())

    @property
    def passed(self) -> bool:
        return self.identities_hold and self.positive and self.bound_violations == 0

    def lines(self) -> list[str]:
        out = [f"{'check':<22}{'value':>14}  result"]
        for name, gap in self.identity_gaps.items():
            out.append(f"{name:<22}{gap:>14.3e}  {'PASS' if gap <= self.rtol else 'FAIL'}")
        for name, v in self.min_values.items():
            out.append(f"{'min ' + name:<22}{v:>14.6g}  {'PASS' if v > 0 else 'FAIL'}")
        out.append(
            f"{'bound violations':<22}{self.bound_violations:>14d}  "
            f"{'PASS' if self.bound_violations == 0 else 'FAIL'} "
            f"({self.bound_samples} samples, worst lhs-rhs {self.worst_bound_gap:.3g})"
        )
        return out


def check_theory(
    grid: int = 50,
    samples: int = 100_000,
    seed: int = 0,
    rtol: float = 1e-12,
    theta_range: tuple[float, float] = (0.01, 0.49),
    tau_range: tuple[float, float] = (0.05, 3.0),
    sample_theta: tuple[float, float] = (0.05, 0.45),
    sample_tau: tuple[float, float] = (0.1, 2.0),
    sample_box: float = 10.0,
) -> TheoryReport:
    """Identities and positivity on a (theta, tau) grid, the bound on random samples."""
    th, ta = np.meshgrid(np.linspace(*theta_range, grid), np.linspace(*tau_range, grid))
    c = analysis_coeffs(th, ta)
    lc = bound_coefficients(th, ta)
    gaps = {f"{k} identity": _relative_gap(lc[k], getattr(c, k)) for k in "DHEF"}
    gaps["G factored form"] = _relative_gap(c.G, g_factored(th, ta))
    gaps["I = D - G"] = _relative_gap(c.D - c.G, c.I)
    A, _, delta = ab_triples(th, ta)
    gaps["A sums to 0"] = float(np.max(np.abs(A.total)))
    mins = {k: float(np.min(v)) for k, v in c.as_dict().items()}
    mins["delta"] = float(np.min(delta))

    rng = np.random.default_rng(seed)
    st = rng.uniform(*sample_theta, samples)
    su = rng.uniform(*sample_tau, samples)
    v = rng.uniform(-sample_box, sample_box, (3, samples))
    lhs, rhs, holds = quadratic_bound_check(st, su, v[0], v[1], v[2])
    return TheoryReport(
        identity_gaps=gaps,
        min_values=mins,
        bound_samples=samples,
        bound_violations=int(np.count_nonzero(~holds)),
        worst_bound_gap=float(np.min(lhs - rhs)),
        rtol=rtol,
    )
