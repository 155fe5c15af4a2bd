import pytest

from marfert.equilibrium import solve_equilibrium
from marfert.params import SolverSettings, baseline_params, past_params
from marfert.static import build_static_tables


@pytest.fixture(scope="session")
def base():
    return baseline_params()


@pytest.fixture(scope="session")
def past():
    return past_params()


@pytest.fixture(scope="session")
def static(base):
    return build_static_tables(base, SolverSettings())


@pytest.fixture(scope="session")
def eq(base, static):
    return solve_equilibrium(base, SolverSettings(), static=static)


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one verdict line per acceptance criterion for the terminal summary."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
