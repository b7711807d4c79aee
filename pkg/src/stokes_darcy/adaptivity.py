"""Local error estimation and step-size control for the filtered and
unfiltered theta-schemes.

The controller accepts a step when the smaller of the two field estimates
(velocity, head) is at most the tolerance and then grows or shrinks the next
step by ``sigma = min{cap, (tol/EST_u)^p, (tol/EST_phi)^p}``; otherwise it
retries with a smaller step. The filtered scheme is second order and uses
``p = 1/3`` with a third divided difference as estimate. The unfiltered
scheme uses ``p = 1/2`` and the filter correction itself as estimate.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from .filtering import filter_correction
from .stepping import COUPLED, Problem, State, StateHistory, advance

log = logging.getLogger(__name__)

ACCEPT = "accept"
REJECT = "reject"


class NotReadyError(ValueError):
    """Too few states for the requested estimate."""


class ControllerStallError(RuntimeError):
    """The controller cannot find an acceptable step."""


@dataclass(frozen=True)
class ControllerConfig:
    tolerance: float
    filtered: bool = True
    safety_accept: float = 0.9
    safety_reject: float = 0.6
    growth_cap: float = 2.0
    tau_min: float = 0.1
    tau_max: float = 2.0
    k_min: float = 1e-10
    k_max: float = 0.1
    initial_step: float = 0.01
    max_rejections: int = 30

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not 0 < self.safety_reject < self.safety_accept < 1:
            raise ValueError("need 0 < safety_reject < safety_accept < 1")
        if not self.growth_cap >= 1:
            raise ValueError("growth cap must be at least 1")
        if not 0 < self.tau_min <= 1 <= self.tau_max:
            raise ValueError("need 0 < tau_min <= 1 <= tau_max")
        if not 0 < self.k_min < self.k_max:
            raise ValueError("need 0 < k_min < k_max")
        if not self.k_min <= self.initial_step <= self.k_max:
            raise ValueError("initial step must lie in [k_min, k_max]")
        if self.max_rejections < 1:
            raise ValueError("max_rejections must be at least 1")

    @property
    def exponent(self) -> float:
        return 1 / 3 if self.filtered else 1 / 2

    @property
    def bootstrap_count(self) -> int:
        """Accepted states needed before the first controlled step."""
        return 3 if self.filtered else 2


@dataclass(frozen=True)
class StepDecision:
    accepted: bool
    step: float  # k_{m+1} when accepted, the retry k_m otherwise
    sigma: float
    est_u: float
    est_phi: float

    @property
    def verdict(self) -> str:
        return ACCEPT if self.accepted else REJECT


def divided_difference(values: Sequence, times: Sequence[float], order: int | None = None):
    """Newton divided difference over the last ``order + 1`` samples."""
    if order is None:
        order = len(times) - 1
    if order < 0 or len(times) < order + 1 or len(values) != len(times):
        raise ValueError("need order + 1 samples with matching times")
    t = np.asarray(times[len(times) - order - 1 :], dtype=float)
    if len(np.unique(t)) != len(t):
        raise ValueError("divided differences need distinct times")
    table = [np.asarray(v, dtype=float) for v in values[len(values) - order - 1 :]]
    for j in range(1, order + 1):
        table = [(table[i + 1] - table[i]) / (t[i + j] - t[i]) for i in range(len(table) - 1)]
    return table[0]


def est_filtered(states: Sequence[State]) -> tuple[np.ndarray, np.ndarray]:
    """``chi^3 * delta^3 y`` for velocity and head from the last four states.

    ``chi^3 = k_m (k_m + k_{m-1}) (k_m + k_{m-1} + k_{m-2})``, the Newton
    increment factor, makes the estimate a third-order quantity.
    """
    if len(states) < 4:
        raise NotReadyError(f"need 4 states, got {len(states)}")
    s = list(states)[-4:]
    t = [x.t for x in s]
    chi3 = (t[3] - t[2]) * (t[3] - t[1]) * (t[3] - t[0])
    return (
        chi3 * divided_difference([x.u for x in s], t, 3),
        chi3 * divided_difference([x.phi for x in s], t, 3),
    )


def est_unfiltered(y_hat, y_m, y_m1, theta: float, tau: float):
    """Filter correction of the provisional value, used as the error estimate."""
    return filter_correction(y_hat, y_m, y_m1, theta, tau)


def decide_step(
    est_u: float,
    est_phi: float,
    k: float,
    prev_sigma: float,
    prev_k: float,
    config: ControllerConfig,
    rejections: int = 0,
) -> StepDecision:
    """Accept or reject an attempted step ``k`` given the estimate norms.

    ``prev_sigma`` and ``prev_k`` belong to the last accepted step.
    ``rejections`` counts the consecutive rejections before this attempt.
    """
    if est_u < 0 or est_phi < 0 or math.isnan(est_u) or math.isnan(est_phi):
        raise ValueError("estimate norms must be non-negative")
    tol, p = config.tolerance, config.exponent
    ratios = [(tol / e) ** p if e > 0 else math.inf for e in (est_u, est_phi)]
    smallest = min(est_u, est_phi)
    if smallest < tol / 4:
        sigma = min(config.growth_cap, *ratios)
    elif smallest <= tol:
        sigma = min(1.0, *ratios)
    else:
        if rejections + 1 > config.max_rejections:
            raise ControllerStallError(f"{rejections + 1} consecutive rejections at k={k:g}")
        sigma = min(1.0, *ratios)
        retry = min(config.safety_reject * prev_sigma * prev_k, config.safety_reject / config.safety_accept * k)
        retry = max(retry, config.tau_min * prev_k, config.k_min)
        if not retry < k:
            raise ControllerStallError(f"step cannot shrink below {k:g}")
        return StepDecision(False, retry, sigma, est_u, est_phi)
    k_next = config.safety_accept * sigma * k
    k_next = min(max(k_next, config.tau_min * k), config.tau_max * k)
    k_next = min(max(k_next, config.k_min), config.k_max)
    return StepDecision(True, k_next, sigma, est_u, est_phi)


@dataclass
class StepRecord:
    m: int
    t: float
    k: float
    tau: float
    sigma: float
    est_u: float
    est_phi: float
    verdict: str
    reject_count: int


LOG_COLUMNS = tuple(f.name for f in fields(StepRecord))


def write_step_log(records: Sequence[StepRecord], stream) -> None:
    """CSV with full float precision, so a log can drive an exact replay."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for r in records:
        w.writerow([repr(v) if isinstance(v, float) else v for v in asdict(r).values()])


def read_step_log(stream) -> list[StepRecord]:
    rows = list(csv.DictReader(stream))
    if rows and tuple(rows[0]) != LOG_COLUMNS:
        raise ValueError(f"unexpected step log columns {tuple(rows[0])}")
    types = {f.name: f.type for f in fields(StepRecord)}
    conv = {"int": int, "float": float, "str": str}
    return [StepRecord(**{k: conv[types[k]](v) for k, v in row.items()}) for row in rows]


def step_log_csv(records: Sequence[StepRecord]) -> str:
    buf = io.StringIO()
    write_step_log(records, buf)
    return buf.getvalue()


@dataclass
class AdaptiveResult:
    trajectory: list[State]
    records: list[StepRecord] = field(default_factory=list)

    @property
    def accepted_steps(self) -> list[float]:
        return [r.k for r in self.records if r.verdict == ACCEPT]

    @property
    def rejections(self) -> int:
        return sum(r.verdict == REJECT for r in self.records)

    @property
    def mean_step(self) -> float:
        ks = self.accepted_steps
        return float(np.mean(ks)) if ks else math.nan


StepFunction = Callable[[StateHistory, float], tuple[State, State]]
NormFunction = Callable[[np.ndarray, np.ndarray], tuple[float, float]]


def adaptive_loop(
    step: StepFunction,
    norms: NormFunction,
    bootstrap: Sequence[State],
    theta: float,
    config: ControllerConfig,
    T: float,
) -> AdaptiveResult:
    """Controller loop over any stepper producing ``(provisional, accepted)``."""
    need = config.bootstrap_count
    if len(bootstrap) < need:
        raise NotReadyError(f"need {need} bootstrap states, got {len(bootstrap)}")
    history = StateHistory(bootstrap)
    result = AdaptiveResult(list(bootstrap))
    prev_k = history.last_step
    prev_sigma = 1.0
    k = min(max(prev_k, config.k_min), config.k_max)
    m = len(bootstrap) - 1
    rejections = 0
    while T - history.latest.t > 1e-12 * max(1.0, abs(T)):
        t = history.latest.t
        if t + k > T:
            k = T - t
        tau = history.ratio(k)
        prov, new = step(history, k)
        if config.filtered:
            est = est_filtered(list(history)[-3:] + [new])
        else:
            prev, prev2 = history[-1], history[-2]
            est = (
                est_unfiltered(prov.u, prev.u, prev2.u, theta, tau),
                est_unfiltered(prov.phi, prev.phi, prev2.phi, theta, tau),
            )
        est_u, est_phi = norms(*est)
        d = decide_step(est_u, est_phi, k, prev_sigma, prev_k, config, rejections)
        result.records.append(
            StepRecord(m + 1, t + k, k, tau, d.sigma, est_u, est_phi, d.verdict, rejections)
        )
        if d.accepted:
            history.push(new)
            result.trajectory.append(new)
            prev_k, prev_sigma = k, d.sigma
            k = d.step
            m += 1
            rejections = 0
        else:
            log.debug("rejected k=%g at t=%g (EST %g, %g)", k, t, est_u, est_phi)
            k = d.step
            rejections += 1
    return result


def mass_norms(problem: Problem) -> NormFunction:
    Mu, Mphi = problem.forms.Mu_l2, problem.forms.Mphi_l2

    def norms(eu, ephi):
        return math.sqrt(max(float(eu @ (Mu @ eu)), 0.0)), math.sqrt(max(float(ephi @ (Mphi @ ephi)), 0.0))

    return norms


def problem_stepper(problem: Problem, theta: float, coupling: str, filtered: bool) -> StepFunction:
    def step(history, k):
        return advance(problem, history, k, theta, coupling, filtered)

    return step


def self_start(
    problem: Problem, initial: State, theta: float, k0: float, count: int, coupling: str = COUPLED
) -> list[State]:
    """Startup states from one initial state by unfiltered steps of ``k0 / 2``."""
    history = StateHistory([initial])
    states = [initial]
    while len(states) < count:
        _, s = advance(problem, history, k0 / 2, theta, coupling, filtered=False, order=1)
        history.push(s)
        states.append(s)
    return states


def run_adaptive(
    problem: Problem,
    theta: float,
    config: ControllerConfig,
    coupling: str,
    T: float,
    bootstrap: Sequence[State],
) -> AdaptiveResult:
    """Adaptive run to ``T``; ``config.filtered`` selects the scheme variant."""
    return adaptive_loop(
        problem_stepper(problem, theta, coupling, config.filtered),
        mass_norms(problem),
        bootstrap,
        theta,
        config,
        T,
    )


def replay(
    problem: Problem,
    theta: float,
    records: Sequence[StepRecord],
    coupling: str,
    filtered: bool,
    bootstrap: Sequence[State],
) -> list[State]:
    """Re-execute the accepted steps of a logged run."""
    history = StateHistory(bootstrap)
    trajectory = list(bootstrap)
    for r in records:
        if r.verdict != ACCEPT:
            continue
        _, s = advance(problem, history, r.k, theta, coupling, filtered)
        history.push(s)
        trajectory.append(s)
    return trajectory
