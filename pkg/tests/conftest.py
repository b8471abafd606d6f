import functools
import math

import numpy as np
import pytest

from wpharmonic.domain import ConformalMetric, build_disk_mesh
from wpharmonic.solver import Schedule, boundary_map, solve_dirichlet

FIXTURES = {
    "line": (lambda t: 2 + np.cos(t), lambda t: 0 * t, None),
    "quad": (lambda t: 2 + np.cos(2 * t), lambda t: 0 * t, None),
    "line_conf": (lambda t: 2 + np.cos(t), lambda t: 0 * t, 0.1),
    "winding": (lambda t: 0.6 - 0.4 * np.cos(t), lambda t: 10 * np.sin(t), None),
}


def omega(h):
    return 2.0 / (1.0 + math.sin(1.1 * math.pi * h))


@functools.lru_cache(maxsize=None)
def mesh(h, bump=None):
    metric = ConformalMetric.radial_bump(bump) if bump else None
    return build_disk_mesh(h, metric)


@functools.lru_cache(maxsize=None)
def solved(name, h, mode="colored"):
    rf, pf, bump = FIXTURES[name]
    m = mesh(h, bump)
    return solve_dirichlet(m, boundary_map(m, rf, pf), schedule(h, mode))


def schedule(h, mode="colored"):
    return Schedule(mode=mode, omega=omega(h) if mode == "colored" else 1.0)


@pytest.fixture(scope="session")
def solve():
    return solved


@pytest.fixture(scope="session")
def disk():
    return mesh


# one verdict line per acceptance criterion, printed after the run
VERDICTS: dict = {}


def record(n: int, ok: bool, detail: str = ""):
    prev = VERDICTS.get(n)
    ok = ok and (prev is None or prev[0])
    text = "; ".join(x for x in ((prev[1] if prev else ""), detail) if x)
    VERDICTS[n] = (ok, text)


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        ok, text = VERDICTS[n]
        terminalreporter.write_line(f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {text}")
