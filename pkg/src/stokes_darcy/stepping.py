"""Variable-step theta-scheme for the coupled Stokes/Darcy system.

One step advances ``(u_f, p_f, phi_p)`` from ``t_m`` to ``t_m + k`` by

    (uhat - u^m)/k + a((1-theta) uhat + theta u^m, v) + b(v, (1-theta) phat + theta p^m)
        = <(1-theta) F^{m+1} + theta F^m, v>,
    b((1-theta) uhat + theta u^m, q) = 0,

either monolithically or split into a Stokes and a Darcy solve that see the
other subdomain only through extrapolated interface data.

The pressure unknown actually solved for is the combination
``P = (1-theta) phat + theta p^m``; ``phat`` is recovered afterwards, which
keeps the system matrix a function of ``(k, theta)`` alone.
"""
from __future__ import annotations

import logging
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .assembly import LoadAssembler, SystemForms
from .filtering import apply_filter, reconstruct_provisional
from .fespace import boundary_dofs, dirichlet_dofs
from .geometry import BoundaryTag
from .linalg import EliminatedSystem

log = logging.getLogger(__name__)

COUPLED = "coupled"
DECOUPLED = "decoupled"


@dataclass(frozen=True)
class State:
    t: float
    u: np.ndarray
    p: np.ndarray
    phi: np.ndarray

    def fields(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.u, self.p, self.phi


class StateHistory:
    """The most recent accepted states, oldest first."""

    def __init__(self, states: Iterable[State] = (), capacity: int = 4):
        if capacity < 4:
            raise ValueError("history must hold at least 4 states")
        self._states: deque[State] = deque(maxlen=capacity)
        for s in states:
            self.push(s)

    def push(self, state: State) -> None:
        if self._states and not state.t > self._states[-1].t:
            raise ValueError(f"times must increase: {state.t} after {self._states[-1].t}")
        self._states.append(state)

    def __len__(self) -> int:
        return len(self._states)

    def __getitem__(self, i: int) -> State:
        return self._states[i]

    def __iter__(self):
        return iter(self._states)

    @property
    def latest(self) -> State:
        return self._states[-1]

    @property
    def times(self) -> list[float]:
        return [s.t for s in self._states]

    @property
    def last_step(self) -> float:
        """``k_{m-1} = t_m - t_{m-1}``."""
        if len(self) < 2:
            raise ValueError("need two states for a step size")
        return self._states[-1].t - self._states[-2].t

    def ratio(self, k: float) -> float:
        """``tau_{m-1} = k_m / k_{m-1}`` for a proposed step ``k``."""
        return k / self.last_step

    def copy(self) -> "StateHistory":
        return StateHistory(self._states, self._states.maxlen)


@dataclass(frozen=True)
class ThetaConfig:
    theta: float
    extrapolation_order: int = 2

    def __post_init__(self):
        if not 0 < self.theta < 0.5:
            raise ValueError(f"theta must lie in (0, 1/2), got {self.theta}")
        if self.extrapolation_order not in (1, 2):
            raise ValueError("extrapolation order must be 1 or 2")


def _check_theta(theta: float) -> None:
    # the stepper itself accepts theta -> 0 (backward Euler limit)
    if not 0 <= theta < 0.5:
        raise ValueError(f"theta must lie in [0, 1/2), got {theta}")


def constraint_rhs(B: sp.spmatrix, u_m: np.ndarray, theta: float) -> np.ndarray:
    """Right-hand side of ``B uhat = -theta/(1-theta) B u^m``."""
    return -(theta / (1 - theta)) * (B @ u_m)


def interface_weights(theta: float, tau: float, order: int) -> tuple[float, float]:
    """Weights on (y^m, y^{m-1}) replacing ``(1-theta) yhat + theta y^m`` in the
    interface term of the split scheme."""
    if order == 1:
        return 1.0, 0.0
    if order == 2:
        return 1 + (1 - theta) * tau, -(1 - theta) * tau
    raise ValueError("extrapolation order must be 1 or 2")


class _LRU(OrderedDict):
    def __init__(self, size: int):
        super().__init__()
        self.size = size

    def get_or_build(self, key, build):
        if key in self:
            self.move_to_end(key)
            return self[key]
        value = build()
        self[key] = value
        if len(self) > self.size:
            self.popitem(last=False)
        return value


@dataclass(eq=False)
class Problem:
    """Assembled forms plus time-dependent data of one simulation.

    ``forcing_f``/``boundary_u`` map ``(x, y, t)`` to a ``(2, ...)`` stack,
    ``forcing_p``/``boundary_phi`` to a scalar array. Dirichlet data act on
    the outer boundaries; the interface carries the natural coupling
    conditions.
    """

    forms: SystemForms
    forcing_f: Callable
    forcing_p: Callable
    boundary_u: Callable
    boundary_phi: Callable
    pressure_gauge: Callable | None = None
    cache_size: int = 4
    _load_cache: _LRU = field(init=False, repr=False)
    _ops: _LRU = field(init=False, repr=False)

    def __post_init__(self):
        f = self.forms
        self.fixed_u = dirichlet_dofs(f.velocity, BoundaryTag.FLUID_OUTER)
        self.fixed_phi = dirichlet_dofs(f.head, BoundaryTag.POROUS_OUTER)
        self.n_u, self.n_p, self.n_phi = f.velocity.dof_count, f.pressure.dof_count, f.head.dof_count
        all_velocity = np.concatenate(
            [f.velocity.component_dofs(c, boundary_dofs(f.velocity)) for c in range(2)]
        )
        # pressure is only determined up to a constant if no velocity DOF is free on the boundary
        self.pin_pressure = bool(np.isin(all_velocity, self.fixed_u).all())
        self._u_coords = f.velocity.coords[self.fixed_u % f.velocity.n_scalar]
        self._u_comp = self.fixed_u // f.velocity.n_scalar
        self._phi_coords = f.head.coords[self.fixed_phi]
        self._load_f = LoadAssembler(f.velocity)
        self._load_p = LoadAssembler(f.head, weight=f.coeffs.g)
        self._load_cache = _LRU(8)
        self._ops = _LRU(self.cache_size)

    # time-dependent data
    def load(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        def build():
            return self._load_f(self.forcing_f, t), self._load_p(self.forcing_p, t)

        return self._load_cache.get_or_build(float(t), build)

    def dirichlet_values(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        uv = np.asarray(self.boundary_u(self._u_coords[:, 0], self._u_coords[:, 1], t))
        u_d = uv[self._u_comp, np.arange(len(self._u_comp))]
        phi_d = np.asarray(
            self.boundary_phi(self._phi_coords[:, 0], self._phi_coords[:, 1], t), dtype=float
        ) * np.ones(len(self.fixed_phi))
        return u_d, phi_d

    def gauge_value(self, t: float) -> float:
        if self.pressure_gauge is None:
            return 0.0
        x, y = self.forms.pressure.coords[0]
        return float(self.pressure_gauge(x, y, t))

    # operators
    def _pressure_fixed(self) -> np.ndarray:
        return np.array([0], dtype=np.int64) if self.pin_pressure else np.empty(0, dtype=np.int64)

    def coupled_operator(self, k: float, theta: float) -> EliminatedSystem:
        def build():
            f = self.forms
            w = 1 - theta
            K = sp.bmat(
                [
                    [f.Mf / k + w * f.Af, f.B.T, w * f.C],
                    [f.B, None, None],
                    [-w * f.C.T, None, f.Mp / k + w * f.Ap],
                ],
                format="csr",
            )
            fixed = np.concatenate(
                [self.fixed_u, self.n_u + self._pressure_fixed(), self.n_u + self.n_p + self.fixed_phi]
            )
            log.debug("factorizing coupled operator k=%g theta=%g", k, theta)
            return EliminatedSystem(K, fixed)

        return self._ops.get_or_build(("coupled", float(k), float(theta)), build)

    def stokes_operator(self, k: float, theta: float) -> EliminatedSystem:
        def build():
            f = self.forms
            K = sp.bmat([[f.Mf / k + (1 - theta) * f.Af, f.B.T], [f.B, None]], format="csr")
            fixed = np.concatenate([self.fixed_u, self.n_u + self._pressure_fixed()])
            return EliminatedSystem(K, fixed)

        return self._ops.get_or_build(("stokes", float(k), float(theta)), build)

    def darcy_operator(self, k: float, theta: float) -> EliminatedSystem:
        def build():
            f = self.forms
            return EliminatedSystem(f.Mp / k + (1 - theta) * f.Ap, self.fixed_phi)

        return self._ops.get_or_build(("darcy", float(k), float(theta)), build)

    def interpolate_state(self, t: float, velocity, pressure, head) -> State:
        f = self.forms
        return State(
            t,
            f.velocity.interpolate(velocity, t),
            f.pressure.interpolate(pressure, t),
            f.head.interpolate(head, t),
        )


def _check_step(k: float, theta: float) -> None:
    if not k > 0:
        raise ValueError(f"step size must be positive, got {k}")
    _check_theta(theta)


def theta_step_coupled(
    problem: Problem,
    history: StateHistory,
    k: float,
    theta: float,
    boundary: tuple[np.ndarray, np.ndarray] | None = None,
) -> State:
    """Monolithic provisional step from ``history.latest`` to ``t + k``."""
    _check_step(k, theta)
    f = problem.forms
    s = history.latest
    t1 = s.t + k
    Ff1, Fp1 = problem.load(t1)
    Ff0, Fp0 = problem.load(s.t)
    w = 1 - theta
    rhs_u = f.Mf @ s.u / k - theta * (f.Af @ s.u + f.C @ s.phi) + w * Ff1 + theta * Ff0
    rhs_p = constraint_rhs(f.B, s.u, theta)
    rhs_phi = f.Mp @ s.phi / k - theta * (f.Ap @ s.phi - f.C.T @ s.u) + w * Fp1 + theta * Fp0
    u_d, phi_d = boundary if boundary is not None else problem.dirichlet_values(t1)
    fixed_vals = [u_d]
    if problem.pin_pressure:
        fixed_vals.append([problem.gauge_value(t1)])
    fixed_vals.append(phi_d)
    op = problem.coupled_operator(k, theta)
    x = op.solve(np.concatenate([rhs_u, rhs_p, rhs_phi]), np.concatenate(fixed_vals))
    n_u, n_p = problem.n_u, problem.n_p
    P = x[n_u : n_u + n_p]
    return State(t1, x[:n_u], (P - theta * s.p) / w, x[n_u + n_p :])


def theta_step_decoupled(
    problem: Problem,
    history: StateHistory,
    k: float,
    theta: float,
    order: int = 2,
    boundary: tuple[np.ndarray, np.ndarray] | None = None,
) -> State:
    """Split provisional step; each subdomain solve reads only ``history``."""
    _check_step(k, theta)
    f = problem.forms
    s = history.latest
    t1 = s.t + k
    if order == 2:
        if len(history) < 2:
            raise ValueError("second-order interface extrapolation needs two states")
        prev = history[-2]
        a, b = interface_weights(theta, history.ratio(k), 2)
        phi_ext = a * s.phi + b * prev.phi
        u_ext = a * s.u + b * prev.u
    else:
        phi_ext, u_ext = s.phi, s.u
    u_d, phi_d = boundary if boundary is not None else problem.dirichlet_values(t1)
    u_new, p_new = _stokes_solve(problem, s, k, theta, phi_ext, u_d, t1)
    phi_new = _darcy_solve(problem, s, k, theta, u_ext, phi_d, t1)
    return State(t1, u_new, p_new, phi_new)


def _stokes_solve(problem: Problem, s: State, k, theta, phi_ext, u_d, t1):
    f = problem.forms
    Ff1, _ = problem.load(t1)
    Ff0, _ = problem.load(s.t)
    w = 1 - theta
    rhs_u = f.Mf @ s.u / k - theta * (f.Af @ s.u) + w * Ff1 + theta * Ff0 - f.C @ phi_ext
    rhs_p = constraint_rhs(f.B, s.u, theta)
    fixed_vals = [u_d]
    if problem.pin_pressure:
        fixed_vals.append([problem.gauge_value(t1)])
    x = problem.stokes_operator(k, theta).solve(
        np.concatenate([rhs_u, rhs_p]), np.concatenate(fixed_vals)
    )
    P = x[problem.n_u :]
    return x[: problem.n_u], (P - theta * s.p) / w


def _darcy_solve(problem: Problem, s: State, k, theta, u_ext, phi_d, t1):
    f = problem.forms
    _, Fp1 = problem.load(t1)
    _, Fp0 = problem.load(s.t)
    w = 1 - theta
    rhs = f.Mp @ s.phi / k - theta * (f.Ap @ s.phi) + w * Fp1 + theta * Fp0 + f.C.T @ u_ext
    return problem.darcy_operator(k, theta).solve(rhs, phi_d)


def provisional_step(
    problem: Problem,
    history: StateHistory,
    k: float,
    theta: float,
    coupling: str = COUPLED,
    filtered: bool = True,
    order: int | None = None,
) -> State:
    """Provisional solution at ``t + k``.

    In filtered mode the Dirichlet values of the provisional solution are the
    filter's pre-image of the exact boundary data, so that the filtered state
    matches the boundary data exactly.
    """
    boundary = None
    if filtered and len(history) >= 2:
        tau = history.ratio(k)
        u_d, phi_d = problem.dirichlet_values(history.latest.t + k)
        m, m1 = history[-1], history[-2]
        boundary = (
            reconstruct_provisional(u_d, m.u[problem.fixed_u], m1.u[problem.fixed_u], theta, tau),
            reconstruct_provisional(phi_d, m.phi[problem.fixed_phi], m1.phi[problem.fixed_phi], theta, tau),
        )
    if coupling == COUPLED:
        return theta_step_coupled(problem, history, k, theta, boundary)
    if coupling == DECOUPLED:
        if order is None:
            order = 2 if filtered else 1
        if order == 2 and len(history) < 2:
            order = 1
        return theta_step_decoupled(problem, history, k, theta, order, boundary)
    raise ValueError(f"unknown coupling {coupling!r}")


def filter_state(provisional: State, history: StateHistory, theta: float) -> State:
    m, m1 = history[-1], history[-2]
    tau = (provisional.t - m.t) / (m.t - m1.t)
    return State(
        provisional.t,
        *(
            apply_filter(new, a, b, theta, tau)
            for new, a, b in zip(provisional.fields(), m.fields(), m1.fields())
        ),
    )


def advance(
    problem: Problem,
    history: StateHistory,
    k: float,
    theta: float,
    coupling: str = COUPLED,
    filtered: bool = True,
    order: int | None = None,
) -> tuple[State, State]:
    """One full step: returns ``(provisional, accepted)``; history is not modified."""
    prov = provisional_step(problem, history, k, theta, coupling, filtered, order)
    if filtered and len(history) >= 2:
        return prov, filter_state(prov, history, theta)
    return prov, prov


def run_fixed(
    problem: Problem,
    initial: Sequence[State],
    steps: Callable[[int, float], float] | float,
    theta: float,
    coupling: str = COUPLED,
    filtered: bool = True,
    n_steps: int | None = None,
    T: float | None = None,
    callback: Callable[[int, State], None] | None = None,
) -> list[State]:
    """Advance from the last initial state with prescribed step sizes.

    ``steps`` is a constant step or ``rule(m, t_m) -> k_m`` where ``m`` counts
    from the first initial state. Stops after ``n_steps`` steps or at ``T``
    (the final step is clipped to land on ``T``).
    """
    if n_steps is None and T is None:
        raise ValueError("give n_steps or T")
    rule = steps if callable(steps) else (lambda m, t: float(steps))
    history = StateHistory(initial)
    trajectory = list(initial)
    m = len(initial) - 1
    done = 0
    while True:
        if n_steps is not None and done >= n_steps:
            break
        t = history.latest.t
        if T is not None and t >= T - 1e-12 * max(1.0, abs(T)):
            break
        k = rule(m, t)
        if T is not None and t + k > T and k - (T - t) > 1e-9 * k:
            # an overshoot at roundoff level keeps k so the cached operator is reused
            k = T - t
        _, state = advance(problem, history, k, theta, coupling, filtered)
        history.push(state)
        trajectory.append(state)
        m += 1
        done += 1
        if callback is not None:
            callback(m, state)
    return trajectory
