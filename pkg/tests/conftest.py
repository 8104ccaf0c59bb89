import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running end-to-end checks")
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _CRITERIA.setdefault(m.args[0], {"title": m.args[1], "ok": None})


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for num, entry in _CRITERIA.items():
        if report.nodeid.endswith(f"test_criterion_{num}"):
            entry["ok"] = report.passed if entry["ok"] is None else entry["ok"] and report.passed


def pytest_terminal_summary(terminalreporter):
    ran = {k: v for k, v in _CRITERIA.items() if v["ok"] is not None}
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ran):
        v = ran[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if v['ok'] else 'FAIL'}  {v['title']}")
