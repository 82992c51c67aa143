import dataclasses

import numpy as np
import pytest
from hypothesis import settings

from handpinch.hand_model import FINGERS, build_case
from handpinch.workspace import enumerate_samples, grid

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


_RES1 = {}


def res1_samples(case: int):
    """Resolution-1 sample sets for one case (index carries phalanx points)."""
    if case not in _RES1:
        m = build_case(case)
        _RES1[case] = {f: enumerate_samples(m, f, grid(m.ranges[f], 1),
                                            include_phalanges=f == "index")
                       for f in FINGERS}
    return _RES1[case]


@pytest.fixture(scope="session")
def case1():
    return res1_samples(1)


@pytest.fixture(scope="session")
def case4():
    return res1_samples(4)


def subset(samples, idx):
    """Sample set restricted to grid rows ``idx`` (row order kept)."""
    idx = np.asarray(idx)
    ph = None if samples.phalanx_points is None else samples.phalanx_points[idx]
    return dataclasses.replace(samples, p_joint=samples.p_joint[idx], p_tip=samples.p_tip[idx],
                               direction=samples.direction[idx], phalanx_points=ph)
