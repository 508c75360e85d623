import warnings

import numpy as np
import pytest

from sgraph.model import PwlMode, PwlSystem, StateSpace, realize_tf_denominator
from sgraph.presets import PRESETS
from sgraph.sim import sample_cloud
from sgraph.solve import sweep


def first_order(a: float = 1.0) -> StateSpace:
    return StateSpace([[-a]], [[1.0]], [[1.0]], [[0.0]])


def third_order() -> StateSpace:
    return realize_tf_denominator([1, 5, 2, 1])


def sign_switching_pwl() -> PwlSystem:
    """x' = -x + u while x >= 0, x' = -3x + u while x <= 0, y = x."""
    E = np.array([[1.0, 0.0]])
    fast = StateSpace([[-3.0]], [[1.0]], [[1.0]], [[0.0]])
    return PwlSystem((PwlMode(first_order(1.0), E), PwlMode(fast, -E)))


class SweepCache:
    def __init__(self):
        self._store = {}

    def preset(self, name: str, hard: bool = False):
        key = (name, hard)
        if key not in self._store:
            p = PRESETS[name]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                self._store[key] = sweep(p.system(), p.config(hard))
        return self._store[key]

    def system(self, key, sys, cfg=None, hard=False):
        if key not in self._store:
            self._store[key] = sweep(sys, cfg, hard=hard)
        return self._store[key]


@pytest.fixture(scope="session")
def sweeps():
    return SweepCache()


class CloudCache:
    def __init__(self):
        self._store = {}

    def get(self, key, sys, count: int, seed: int):
        k = (key, count, seed)
        if k not in self._store:
            self._store[k] = sample_cloud(sys, count, seed)
        return self._store[k]


@pytest.fixture(scope="session")
def clouds():
    return CloudCache()


GATES: list = []


@pytest.fixture
def gate():
    """Record one PASS/FAIL line for an acceptance criterion."""
    def record(criterion: int, ok: bool, detail: str):
        GATES.append((criterion, bool(ok), detail))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not GATES:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in sorted(GATES, key=lambda g: g[0]):
        terminalreporter.line(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
