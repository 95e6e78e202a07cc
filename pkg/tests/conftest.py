import os

import numpy as np
import pytest

from offloadlab.env import SystemParams, sample_channels

# acceptance tests register their outcome here; printed at the end of the session
ACCEPTANCE: dict[str, str] = {}
# last line each acceptance test printed (its measured numbers)
MEASURED: dict[str, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: release criterion with a stated tolerance")
    config.addinivalue_line("markers", "slow: long-running training experiment")


def pytest_runtest_logreport(report):
    if "acceptance" not in report.keywords:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        out = report.capstdout.strip()
        if out:
            MEASURED[name] = out.splitlines()[-1]
        if hasattr(report, "wasxfail"):
            # known-red criterion: the assertion still runs at full tolerance
            ACCEPTANCE[name] = "PASS" if report.passed else "FAIL (known, see README)"
        else:
            ACCEPTANCE[name] = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and report.skipped:
        ACCEPTANCE[name] = "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in ACCEPTANCE.items():
        terminalreporter.write_line(f"{status.split()[0]:<5} {name}{status[4:]}")
        if name in MEASURED:
            terminalreporter.write_line(f"      {MEASURED[name]}")


@pytest.fixture
def params10():
    return SystemParams(n_devices=10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

