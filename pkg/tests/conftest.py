import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nftincentive.market import MarketParams  # noqa: E402

CRITERIA_KEY = pytest.StashKey[dict]()


@pytest.fixture
def params():
    return MarketParams()


def pytest_configure(config):
    config.stash[CRITERIA_KEY] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    results = item.config.stash[CRITERIA_KEY]
    number = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        ok = report.outcome == "passed"
        prev = results.get(number, (True, marker.args[1]))
        results[number] = (prev[0] and ok, marker.args[1])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(CRITERIA_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, title = results[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}")
