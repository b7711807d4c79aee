"""Manufactured test cases, step schedules, error norms and convergence orders.

Both cases use unit physical parameters. The forcing terms are the closed-form
residuals ``g_f = u_t - nu lap(u) + grad(p)`` and ``g_p = S0 phi_t - K lap(phi)``
(isotropic ``K``).
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .assembly import PhysicalCoefficients, SystemForms, build_forms
from .fespace import TRI_POINTS, TRI_WEIGHTS, FeSpace
from .geometry import Rect, build_coupled_mesh
from .adaptivity import ControllerConfig, run_adaptive
from .stepping import Problem, State, run_fixed

pi = math.pi


@dataclass(frozen=True)
class ManufacturedCase:
    name: str
    fluid: Rect
    porous: Rect
    velocity: Callable
    pressure: Callable
    head: Callable
    velocity_dt: Callable
    velocity_lap: Callable
    pressure_grad: Callable
    head_dt: Callable
    head_lap: Callable
    T: float = 1.0

    def forcing_f(self, x, y, t, nu: float = 1.0):
        return self.velocity_dt(x, y, t) - nu * self.velocity_lap(x, y, t) + self.pressure_grad(x, y, t)

    def forcing_p(self, x, y, t, S0: float = 1.0, K: float = 1.0):
        return S0 * self.head_dt(x, y, t) - K * self.head_lap(x, y, t)


# Test 1: (0, pi) x (0, 1) over (0, pi) x (-1, 0), every term carries e^t


def _t1_u(x, y, t):
    e = np.exp(t)
    return np.stack(
        [
            np.sin(2 * pi * y) * np.cos(x) * e / pi,
            (-2 + np.sin(pi * y) ** 2 / pi**2) * np.sin(x) * e,
        ]
    )


def _t1_lap_u(x, y, t):
    e = np.exp(t)
    return np.stack(
        [
            -(4 * pi**2 + 1) / pi * np.sin(2 * pi * y) * np.cos(x) * e,
            (2 - np.sin(pi * y) ** 2 / pi**2 + 2 * np.cos(2 * pi * y)) * np.sin(x) * e,
        ]
    )


def _t1_phi(x, y, t):
    return (np.exp(y) - np.exp(-y)) * np.sin(x) * np.exp(t)


def _zero(x, y, t):
    return np.zeros(np.broadcast(x, y).shape)


def _zero_vec(x, y, t):
    return np.zeros((2,) + np.broadcast(x, y).shape)


TEST1 = ManufacturedCase(
    name="test1",
    fluid=Rect(0.0, pi, 0.0, 1.0),
    porous=Rect(0.0, pi, -1.0, 0.0),
    velocity=_t1_u,
    pressure=_zero,
    head=_t1_phi,
    velocity_dt=_t1_u,
    velocity_lap=_t1_lap_u,
    pressure_grad=_zero_vec,
    head_dt=_t1_phi,
    head_lap=_zero,
    T=2.0,
)


# Test 2: (0, 1) x (1, 2) over (0, 1) x (0, 1), every term carries cos(t)


def _a(x):
    return 2 - pi * np.sin(pi * x)


def _t2_u_shape(x, y):
    return np.stack([x**2 * (y - 1) ** 2 + y, -2.0 / 3.0 * x * (y - 1) ** 3 + _a(x)])


def _t2_u(x, y, t):
    return _t2_u_shape(x, y) * np.cos(t)


def _t2_u_dt(x, y, t):
    return -_t2_u_shape(x, y) * np.sin(t)


def _t2_lap_u(x, y, t):
    return np.stack(
        [
            2 * (y - 1) ** 2 + 2 * x**2,
            -4 * x * (y - 1) + pi**3 * np.sin(pi * x),
        ]
    ) * np.cos(t)


def _t2_p(x, y, t):
    return _a(x) * np.sin(0.5 * pi * y) * np.cos(t)


def _t2_grad_p(x, y, t):
    return np.stack(
        [
            -(pi**2) * np.cos(pi * x) * np.sin(0.5 * pi * y),
            0.5 * pi * _a(x) * np.cos(0.5 * pi * y),
        ]
    ) * np.cos(t)


def _t2_phi_shape(x, y):
    return _a(x) * (1 - y - np.cos(pi * y))


def _t2_phi(x, y, t):
    return _t2_phi_shape(x, y) * np.cos(t)


def _t2_phi_dt(x, y, t):
    return -_t2_phi_shape(x, y) * np.sin(t)


def _t2_lap_phi(x, y, t):
    return (
        pi**3 * np.sin(pi * x) * (1 - y - np.cos(pi * y)) + _a(x) * pi**2 * np.cos(pi * y)
    ) * np.cos(t)


TEST2 = ManufacturedCase(
    name="test2",
    fluid=Rect(0.0, 1.0, 1.0, 2.0),
    porous=Rect(0.0, 1.0, 0.0, 1.0),
    velocity=_t2_u,
    pressure=_t2_p,
    head=_t2_phi,
    velocity_dt=_t2_u_dt,
    velocity_lap=_t2_lap_u,
    pressure_grad=_t2_grad_p,
    head_dt=_t2_phi_dt,
    head_lap=_t2_lap_phi,
    T=1.0,
)

CASES = {"test1": TEST1, "test2": TEST2}


def get_case(name: str) -> ManufacturedCase:
    try:
        return CASES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown case {name!r}; choose from {sorted(CASES)}") from None


def exact_eval(case: ManufacturedCase, which: str, x, y, t):
    funcs = {"u": case.velocity, "p": case.pressure, "phi": case.head}
    if which not in funcs:
        raise ValueError(f"unknown variable {which!r}")
    return funcs[which](np.asarray(x, dtype=float), np.asarray(y, dtype=float), t)


def forcing_eval(case: ManufacturedCase, x, y, t, coeffs: PhysicalCoefficients | None = None):
    coeffs = coeffs or PhysicalCoefficients()
    kappa = _isotropic(coeffs)
    return case.forcing_f(x, y, t, coeffs.nu), case.forcing_p(x, y, t, coeffs.S0, kappa)


def _isotropic(coeffs: PhysicalCoefficients) -> float:
    K = coeffs.K
    if not np.allclose(K, K[0, 0] * np.eye(2)):
        raise ValueError("manufactured forcing supports isotropic K only")
    return float(K[0, 0])


def mesh_divisions(case: ManufacturedCase, h: float) -> tuple[int, int, int]:
    """Cells along the interface and vertically in each subdomain for size ``h``."""
    n = max(1, int(round(case.fluid.width / h)))
    return n, max(1, int(round(case.fluid.height / h))), max(1, int(round(case.porous.height / h)))


def make_problem(
    case: ManufacturedCase,
    h: float,
    coeffs: PhysicalCoefficients | None = None,
    cache_size: int = 4,
) -> Problem:
    coeffs = coeffs or PhysicalCoefficients()
    kappa = _isotropic(coeffs)
    n, nyf, nyp = mesh_divisions(case, h)
    coupled = build_coupled_mesh(case.fluid, case.porous, n, nyf, nyp)
    forms = build_forms(coupled, coeffs)
    return Problem(
        forms,
        forcing_f=lambda x, y, t: case.forcing_f(x, y, t, coeffs.nu),
        forcing_p=lambda x, y, t: case.forcing_p(x, y, t, coeffs.S0, kappa),
        boundary_u=case.velocity,
        boundary_phi=case.head,
        pressure_gauge=case.pressure,
        cache_size=cache_size,
    )


def exact_state(problem: Problem, case: ManufacturedCase, t: float) -> State:
    return problem.interpolate_state(t, case.velocity, case.pressure, case.head)


# step schedules of the variable-step stability test


def schedule_step(schedule: str, m: int, t_m: float) -> float:
    s = schedule.upper()
    if s == "K1":
        k = 0.01 + 0.05 * t_m
    elif s == "K2":
        k = 0.01 if m <= 10 else 0.01 + 0.05 * math.sin(10 * t_m)
    elif s == "K3":
        k = 0.1 - 0.05 * t_m
    else:
        raise ValueError(f"unknown schedule {schedule!r}")
    if not k > 0:
        raise ValueError(f"schedule {s} gives non-positive step {k} at m={m}, t={t_m}")
    return k


# errors


def l2_norm(space: FeSpace, values: np.ndarray) -> float:
    vals = space.evaluate(values, TRI_POINTS[:, 0], TRI_POINTS[:, 1])
    return math.sqrt(_integrate(space, (vals**2).sum(axis=0)))


def _integrate(space: FeSpace, f_at_points: np.ndarray) -> float:
    p = space.mesh.nodes[space.mesh.triangles]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    return float(np.einsum("t,q,tq->", area, TRI_WEIGHTS, f_at_points))


def l2_error(values: np.ndarray, exact: Callable, space: FeSpace, t: float) -> float:
    """``||u_h - u(t)||_{L2}`` by element quadrature."""
    vals = space.evaluate(values, TRI_POINTS[:, 0], TRI_POINTS[:, 1])
    x, y = space.physical_points(TRI_POINTS[:, 0], TRI_POINTS[:, 1])
    ex = np.asarray(exact(x, y, t), dtype=float).reshape(vals.shape)
    return math.sqrt(_integrate(space, ((vals - ex) ** 2).sum(axis=0)))


def exact_l2_norm(exact: Callable, space: FeSpace, t: float) -> float:
    x, y = space.physical_points(TRI_POINTS[:, 0], TRI_POINTS[:, 1])
    ex = np.asarray(exact(x, y, t), dtype=float)
    if ex.ndim == 2:
        ex = ex[None]
    return math.sqrt(_integrate(space, (ex**2).sum(axis=0)))


VARIABLES = ("u", "p", "phi")


def state_errors(state: State, forms: SystemForms, case: ManufacturedCase, relative: bool = False) -> dict:
    spaces = {"u": forms.velocity, "p": forms.pressure, "phi": forms.head}
    exact = {"u": case.velocity, "p": case.pressure, "phi": case.head}
    vals = {"u": state.u, "p": state.p, "phi": state.phi}
    out = {}
    for v in VARIABLES:
        e = l2_error(vals[v], exact[v], spaces[v], state.t)
        if relative:
            ref = exact_l2_norm(exact[v], spaces[v], state.t)
            # a vanishing exact field (pressure of test 1) keeps the absolute error
            if ref > 0:
                e /= ref
        out[v] = e
    return out


def accumulate(steps: Sequence[float], rel_errors: Sequence[float], squared: bool = False) -> float:
    """``sqrt(sum k_i r_i)``, or ``sqrt(sum k_i r_i^2)`` when ``squared``."""
    k = np.asarray(steps, dtype=float)
    r = np.asarray(rel_errors, dtype=float)
    if k.shape != r.shape:
        raise ValueError("steps and errors must have equal length")
    return float(np.sqrt(np.sum(k * (r**2 if squared else r))))


def accumulated_error(
    trajectory: Sequence[State],
    forms: SystemForms,
    case: ManufacturedCase,
    start: int = 2,
    squared: bool = False,
) -> dict:
    """Step-weighted relative L2 errors over ``trajectory[start:]``.

    ``k_i`` is the step that produced ``t_i``. With ``squared=False`` the
    relative errors enter unsquared under the root.
    """
    steps, rel = [], {v: [] for v in VARIABLES}
    for i in range(max(start, 1), len(trajectory)):
        s = trajectory[i]
        steps.append(s.t - trajectory[i - 1].t)
        for v, e in state_errors(s, forms, case, relative=True).items():
            rel[v].append(e)
    return {v: accumulate(steps, rel[v], squared) for v in VARIABLES}


def convergence_order(e1: float, e2: float, s1: float, s2: float) -> float:
    if min(e1, e2, s1, s2) <= 0:
        raise ValueError("errors and sizes must be positive")
    if s1 == s2:
        raise ValueError("sizes must differ")
    return math.log(e1 / e2) / math.log(s1 / s2)


def pairwise_orders(errors: Sequence[dict], sizes: Sequence[float]) -> list[dict]:
    """Orders between consecutive rows; the first row has none."""
    out = [dict.fromkeys(VARIABLES)]
    for i in range(1, len(errors)):
        out.append(
            {
                v: convergence_order(errors[i - 1][v], errors[i][v], sizes[i - 1], sizes[i])
                for v in VARIABLES
            }
        )
    return out


def fit_order(errors: Sequence[float], sizes: Sequence[float]) -> float:
    """Least-squares slope of ``log e`` against ``log s``; equals the pairwise order for two points."""
    e, s = np.asarray(errors, dtype=float), np.asarray(sizes, dtype=float)
    if len(e) < 2 or len(e) != len(s):
        raise ValueError("need at least two (error, size) pairs")
    if np.any(e <= 0) or np.any(s <= 0):
        raise ValueError("errors and sizes must be positive")
    return float(np.polyfit(np.log(s), np.log(e), 1)[0])


def exact_bootstrap(problem: Problem, case: ManufacturedCase, count: int, k0: float, t0: float = 0.0) -> list[State]:
    """``count`` interpolated exact states spaced ``k0`` apart from ``t0``."""
    return [exact_state(problem, case, t0 + i * k0) for i in range(count)]


# sweeps

TIME_COLUMNS = (
    "epsilon", "avg_dt", "n_steps", "n_rejects", "err_u", "err_p", "err_phi",
    "order_u", "order_p", "order_phi", "seconds",
)
SPACE_COLUMNS = ("h", "err_u", "err_p", "err_phi", "order_u", "order_p", "order_phi", "seconds")


@dataclass(frozen=True)
class TimePoint:
    case: str
    h: float
    theta: float
    epsilon: float
    coupling: str
    filtered: bool
    k0: float = 0.01
    T: float = 1.0
    squared: bool = True


@dataclass(frozen=True)
class SpacePoint:
    case: str
    h: float
    theta: float
    dt: float
    coupling: str
    filtered: bool
    T: float = 1.0


def run_time_point(point: TimePoint) -> dict:
    """One adaptive run; errors are accumulated relative errors."""
    case = get_case(point.case)
    problem = make_problem(case, point.h)
    config = ControllerConfig(point.epsilon, filtered=point.filtered, initial_step=point.k0)
    t0 = time.perf_counter()
    boot = exact_bootstrap(problem, case, config.bootstrap_count, point.k0)
    result = run_adaptive(problem, point.theta, config, point.coupling, point.T, boot)
    seconds = time.perf_counter() - t0
    err = accumulated_error(result.trajectory, problem.forms, case, squared=point.squared)
    return {
        "epsilon": point.epsilon,
        "avg_dt": result.mean_step,
        "n_steps": len(result.accepted_steps),
        "n_rejects": result.rejections,
        **{f"err_{v}": err[v] for v in VARIABLES},
        "seconds": seconds,
    }


def run_space_point(point: SpacePoint) -> dict:
    """One fixed-step run; errors are final-time L2 errors."""
    case = get_case(point.case)
    problem = make_problem(case, point.h)
    t0 = time.perf_counter()
    boot = exact_bootstrap(problem, case, 2, point.dt)
    traj = run_fixed(problem, boot, point.dt, point.theta, point.coupling, point.filtered, T=point.T)
    seconds = time.perf_counter() - t0
    err = state_errors(traj[-1], problem.forms, case)
    return {"h": point.h, **{f"err_{v}": err[v] for v in VARIABLES}, "seconds": seconds}


def _map(func, points, jobs: int):
    if jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(func, points))
    return [func(p) for p in points]


def _with_orders(rows: list[dict], size_key: str) -> list[dict]:
    orders = pairwise_orders([{v: r[f"err_{v}"] for v in VARIABLES} for r in rows], [r[size_key] for r in rows])
    for r, o in zip(rows, orders):
        r.update({f"order_{v}": o[v] for v in VARIABLES})
    return rows


def sweep_time(points: Sequence[TimePoint], jobs: int = 1) -> list[dict]:
    """Rows in ``TIME_COLUMNS`` order; orders use the average accepted step."""
    rows = _map(run_time_point, list(points), jobs)
    return [{c: r[c] for c in TIME_COLUMNS} for r in _with_orders(rows, "avg_dt")]


def sweep_space(points: Sequence[SpacePoint], jobs: int = 1) -> list[dict]:
    rows = _map(run_space_point, list(points), jobs)
    return [{c: r[c] for c in SPACE_COLUMNS} for r in _with_orders(rows, "h")]


def fitted_table_orders(rows: Sequence[dict], size_key: str, variables=("u", "phi")) -> dict:
    """Least-squares orders over all rows of a sweep table."""
    return {v: fit_order([r[f"err_{v}"] for r in rows], [r[size_key] for r in rows]) for v in variables}


# variable-step stability runs


def run_schedule(
    case: ManufacturedCase,
    h: float,
    schedule: str,
    theta: float,
    coupling: str,
    filtered: bool = True,
    n_steps: int = 40,
    problem: Problem | None = None,
) -> list[State]:
    """Fixed schedule run from exact data at ``t_0 = 0`` and ``t_1 = k_0``."""
    problem = problem or make_problem(case, h)
    k0 = schedule_step(schedule, 0, 0.0)
    boot = exact_bootstrap(problem, case, 2, k0)
    return run_fixed(
        problem,
        boot,
        lambda m, t: schedule_step(schedule, m, t),
        theta,
        coupling,
        filtered,
        n_steps=n_steps,
    )


def norm_ratios(trajectory: Sequence[State], forms: SystemForms, case: ManufacturedCase) -> np.ndarray:
    """Discrete over exact L2 norms of velocity and head, ``(n_states, 2)``."""
    out = []
    for s in trajectory:
        out.append(
            [
                l2_norm(forms.velocity, s.u) / exact_l2_norm(case.velocity, forms.velocity, s.t),
                l2_norm(forms.head, s.phi) / exact_l2_norm(case.head, forms.head, s.t),
            ]
        )
    return np.array(out)
