import numpy as np
import pytest

from pdmdp.model import DmdpInstance

# Lines collected by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def make_e2() -> DmdpInstance:
    """Two states: state 0 stays (a0) or moves to 1 (a1) with reward 0;
    state 1 is absorbing with reward 1 under both actions. gamma = 0.5."""
    p = np.zeros((2, 2, 2))
    p[0, 0, 0] = 1.0
    p[0, 1, 1] = 1.0
    p[1, :, 1] = 1.0
    r = np.array([[0.0, 0.0], [1.0, 1.0]])
    return DmdpInstance(p, r, 0.5)


def make_single(gamma=0.9, reward=1.0, actions=1) -> DmdpInstance:
    return DmdpInstance(np.ones((1, actions, 1)), np.full((1, actions), reward), gamma)


@pytest.fixture
def e2():
    return make_e2()


@pytest.fixture
def single():
    return make_single()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
