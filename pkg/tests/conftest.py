import numpy as np
import pytest
from hypothesis import settings

from hvicoupling.config import build_problem, fixture_config

settings.register_profile("default", deadline=None, print_blob=True)
settings.load_profile("default")


@pytest.fixture(scope="session")
def canonical():
    """Square with one contact side, rational p and the (2, 1, 1) friction law."""
    return build_problem(fixture_config("square-nonmonotone"))


@pytest.fixture(scope="session")
def canonical_solution(canonical):
    return canonical.solve()


@pytest.fixture(scope="session")
def obstacle_problem():
    return build_problem(fixture_config("square-obstacle"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
