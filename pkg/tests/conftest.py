from __future__ import annotations

import math
import sys

import numpy as np
import pytest

from liouvillelab.geometry import DomainSpec, build_mesh, refine_mesh


@pytest.fixture(scope="session")
def disk_coarse():
    return build_mesh(DomainSpec.unit_disk(), 0.1)


@pytest.fixture(scope="session")
def disk05():
    return build_mesh(DomainSpec.unit_disk(), 0.05)


@pytest.fixture(scope="session")
def disk05r(disk05):
    return refine_mesh(disk05)


@pytest.fixture(scope="session")
def square():
    return build_mesh(DomainSpec.rectangle(1.0, 1.0), 0.1)


def radius(m):
    return np.linalg.norm(m.nodes, axis=1)


PI = math.pi


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULT_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
