import numpy as np
import pytest

from heleshaw.duality import legendre_forward
from heleshaw.flow import solve_family
from heleshaw.forms import quadratic
from heleshaw.grid import square_grid


@pytest.fixture(scope="session")
def quad():
    return quadratic()


@pytest.fixture(scope="session")
def quad_family(quad):
    grid = square_grid(2.0, 64, 0j)
    ts = np.linspace(0.0, 1.0, 17)[1:]
    return grid, solve_family(quad, ts, grid)


@pytest.fixture(scope="session")
def quad_fan(quad_family):
    return legendre_forward(quad_family[1])


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict; the lines are repeated in the terminal summary."""

    def record(number, name, ok, detail=""):
        line = f"criterion {number:>2} {name}: {'PASS' if ok else 'FAIL'} {detail}".rstrip()
        print(line)
        request.config.acceptance_lines.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
