import sys

import numpy as np
import pytest

from flowlab import builtin, scenario_names


@pytest.fixture(scope="session")
def scenarios():
    return {name: builtin(name) for name in scenario_names()}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # acceptance verdict lines survive output capture this way
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "ACCEPTANCE_LINES", ())
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
