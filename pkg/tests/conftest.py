"""Shared fixtures: full runs of the bundled scenarios are computed once per session."""

from __future__ import annotations

import functools
from dataclasses import replace

import pytest

from ringroad import scenarios
from ringroad.sim import Simulator

# criterion number -> (ok, detail), filled by test_acceptance.py
ACCEPTANCE = {}


@functools.lru_cache(maxsize=None)
def simulate(name: str, t_end: float = 300.0, **kw):
    builder = scenarios.BUNDLED.get(name) or getattr(scenarios, name)
    sc = builder(**kw)
    return Simulator(replace(sc, t_end=t_end)).run()


@pytest.fixture(scope="session")
def log_a():
    return simulate("highdensity_n8")


@pytest.fixture(scope="session")
def log_b():
    return simulate("lowdensity_n4", 600.0)


@pytest.fixture(scope="session")
def log_c():
    return simulate("coordination_n4")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
