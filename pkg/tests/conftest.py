import logging

import numpy as np
import pytest

from quadpend.integrator import IntegratorConfig, simulate
from quadpend.presets import preset

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def preset_runs():
    """All five presets at dt = 1e-3 over 6.5 s, simulated once per session."""
    logging.getLogger("quadpend.presets").setLevel(logging.ERROR)
    runs = {}
    for pid in range(1, 6):
        p = preset(pid)
        runs[pid] = simulate(p.initial, p.gains, p.params, IntegratorConfig())
    return runs


@pytest.fixture
def record():
    """Store and print one acceptance line, then assert it."""

    def _record(key, passed, detail):
        ACCEPTANCE[key] = (bool(passed), detail)
        print(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")
        assert passed, detail

    return _record


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.rstrip("ab")), k)):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")
