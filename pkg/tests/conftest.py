import pytest

from quasiperc.multigrid import build_graph

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def penrose10():
    return build_graph("penrose", 10)


@pytest.fixture(scope="session")
def penrose15():
    return build_graph("penrose", 15)


@pytest.fixture(scope="session")
def grid8():
    return build_graph("grid", 8)


@pytest.fixture(scope="session")
def ngrid4():
    return build_graph("ngrid:4", 8)


@pytest.fixture(scope="session")
def band():
    return build_graph("band", 14)


@pytest.fixture(scope="session")
def fortress_grid():
    return build_graph("fortress-grid", 6)


@pytest.fixture(scope="session")
def hole_grid():
    return build_graph("grid-hole", 6)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
