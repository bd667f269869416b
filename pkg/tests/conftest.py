import sys

import numpy as np
import pytest

from mbe_bdf2 import GridSpec, MbeParams, random_s1_mesh


@pytest.fixture
def grid16():
    return GridSpec(M=16)


@pytest.fixture
def params():
    return MbeParams(0.1)


@pytest.fixture
def s1_meshes():
    rng = np.random.default_rng(2024)
    return [random_s1_mesh(1.0, int(rng.integers(2, 201)), seed) for seed in range(20)]


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.summary_lines():
        terminalreporter.write_line(line)
