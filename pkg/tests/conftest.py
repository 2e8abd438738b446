import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


def pytest_addoption(parser):
    parser.addoption("--kitti-depth-dir", action="store", default=None,
                     help="directory of KITTI Depth ground-truth PNGs for the density check")


@pytest.fixture
def kitti_depth_dir(request):
    return request.config.getoption("--kitti-depth-dir")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion."""
    def record(number, passed, detail):
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        ACCEPTANCE_LINES.append(f"[{status}] criterion {number:>2}: {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
