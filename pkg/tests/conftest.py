import numpy as np
import pytest

from paa.harness.scenario import random_model
from paa.smdp import Smdp
from paa.welfare import WelfareConfig


@pytest.fixture
def small_model():
    return random_model(5, 2, 12, WelfareConfig(1.0, 0.1, 1.0), 0.6, seed=3)


def chain_model(gamma=0.5, q=1.0):
    """Deterministic 3-state chain: action 0 stays, action 1 moves right (last state wraps)."""
    kernel = np.zeros((3, 2, 3))
    for s in range(3):
        kernel[s, 0, s] = 1.0
        kernel[s, 1, (s + 1) % 3] = 1.0
    utilities = np.array([[0.2, 0.6, 1.0], [0.4, 0.8, 0.6]])
    return Smdp(kernel, utilities, WelfareConfig(q, 0.1, 1.0), gamma)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
