import os

import numpy as np
import pytest
from hypothesis import settings

# fixed example sequence by default so runs are reproducible;
# HYPOTHESIS_PROFILE=explore draws fresh random examples
settings.register_profile("default", derandomize=True)
settings.register_profile("explore", derandomize=False, max_examples=1000)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_criteria: dict[int, list[bool]] = {}
_titles: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marks = getattr(report, "criterion", None)
    if marks is None:
        return
    number, title = marks
    _titles[number] = title
    _criteria.setdefault(number, []).append(report.outcome == "passed")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        report.criterion = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        ok = all(_criteria[number])
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {_titles[number]}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
