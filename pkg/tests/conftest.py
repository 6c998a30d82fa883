from __future__ import annotations

import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): one of the acceptance criteria")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    number, title = getattr(report, "acceptance", (None, None))
    if number is None:
        return
    entry = _ACCEPTANCE.setdefault(number, {"title": title, "passed": True, "tests": 0})
    entry["tests"] += 1
    if report.outcome != "passed":
        entry["passed"] = False


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        report.acceptance = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[number]
        status = "PASS" if e["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {e['title']} ({e['tests']} checks)")
