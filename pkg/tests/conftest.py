import pytest

from tmextremal.green import solve_green
from tmextremal.kernel import ModelParams


@pytest.fixture(scope="session")
def green_2d():
    """2D Green profile at tau = 1 (beta only enters later through the weight)."""
    return solve_green(ModelParams(2, 0.5, 1.0))


@pytest.fixture(scope="session")
def green_3d():
    return solve_green(ModelParams(3, 0.5, 1.0))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
