import pytest

from stokes_darcy.assembly import build_forms
from stokes_darcy.benchmarks import TEST1, TEST2, make_problem
from stokes_darcy.geometry import Rect, build_coupled_mesh


@pytest.fixture(scope="session")
def unit_forms():
    """Coupled forms on (0,1)x(1,2) over (0,1)x(0,1), 4 cells along the interface."""
    coupled = build_coupled_mesh(Rect(0, 1, 1, 2), Rect(0, 1, 0, 1), 4)
    return build_forms(coupled)


@pytest.fixture(scope="session")
def test2_problem():
    return make_problem(TEST2, 1 / 4)


@pytest.fixture(scope="session")
def test1_problem():
    return make_problem(TEST1, 1 / 4)


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record a one-line verdict per acceptance criterion for the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
