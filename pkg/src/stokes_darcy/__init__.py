"""Variable-step theta-scheme with time filter for the unsteady Stokes/Darcy model."""
from .adaptivity import ControllerConfig, ControllerStallError, NotReadyError, run_adaptive
from .assembly import PhysicalCoefficients, SystemForms, build_forms
from .benchmarks import TEST1, TEST2, make_problem
from .geometry import BoundaryTag, Rect, build_coupled_mesh, build_rect_mesh
from .linalg import SolverError
from .stepping import COUPLED, DECOUPLED, Problem, State, StateHistory, advance, run_fixed

__all__ = [
    "BoundaryTag",
    "COUPLED",
    "ControllerConfig",
    "ControllerStallError",
    "DECOUPLED",
    "NotReadyError",
    "PhysicalCoefficients",
    "Problem",
    "Rect",
    "SolverError",
    "State",
    "StateHistory",
    "SystemForms",
    "TEST1",
    "TEST2",
    "advance",
    "build_coupled_mesh",
    "build_forms",
    "build_rect_mesh",
    "make_problem",
    "run_adaptive",
    "run_fixed",
]
