import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"


def pytest_collection_modifyitems(config, items):
    if not os.environ.get("STEALTIME_SKIP_LIVE"):
        return
    skip = pytest.mark.skip(reason="STEALTIME_SKIP_LIVE is set")
    for item in items:
        if "live" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def fixture_text():
    return lambda name: (FIXTURES / name).read_text()


class FakeClock:
    """Monotonic clock under test control; ``sleep`` advances it."""

    def __init__(self, start_us=1_000_000):
        self.now_us = start_us
        self.sleeps = []

    def __call__(self):
        return self.now_us

    def ns(self):
        return self.now_us * 1000

    def advance(self, us):
        self.now_us += us

    def sleep(self, seconds):
        self.sleeps.append(seconds)
        self.now_us += round(seconds * 1e6)


@pytest.fixture
def clock():
    return FakeClock()


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record a PASS/FAIL line for an acceptance criterion test."""
    lines = []

    def note(text):
        lines.append(text)

    yield note
    failed = request.node.rep_call.failed if hasattr(request.node, "rep_call") else True
    status = "FAIL" if failed else "PASS"
    detail = "; ".join(lines)
    ACCEPTANCE_LINES.append(f"{status} {request.node.name}: {detail}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
