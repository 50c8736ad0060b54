import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIG_2X2 = os.path.join(ROOT, "configs", "synthetic_2x2.ini")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# PASS/FAIL lines from the acceptance suite, repeated after the test run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
