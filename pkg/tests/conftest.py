"""Collects acceptance test outcomes into one summary line per criterion."""

import re

_LABEL = re.compile(r"test_acceptance\.py.*::test_(a\d+[a-z]?)_(\w+)")
_results: list[tuple[str, str, str, float]] = []
_setup_seconds: dict[str, float] = {}


def pytest_runtest_logreport(report):
    match = _LABEL.search(report.nodeid)
    if not match:
        return
    if report.when == "setup":
        # Shared fixtures do the heavy lifting; charge their build to the
        # first test that requested them so the summary shows real cost.
        _setup_seconds[report.nodeid] = report.duration
        return
    if report.when != "call":
        return
    label = match.group(1).upper()
    name = match.group(2)
    if hasattr(report, "wasxfail"):
        outcome = "XFAIL" if report.skipped else "XPASS"
    else:
        outcome = report.outcome.upper()
    duration = report.duration + _setup_seconds.get(report.nodeid, 0.0)
    _results.append((label, name, outcome, duration))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for label, name, outcome, duration in _results:
        status = {"PASSED": "PASS", "FAILED": "FAIL"}.get(outcome, outcome)
        terminalreporter.write_line(f"[{label}] {status} {name} ({duration:.1f}s)")
