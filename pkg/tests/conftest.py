"""Collect one pass/fail line per acceptance criterion and print them at the end."""

import re

_LINES = {}
_CRITERION = re.compile(r"test_criterion_(\d+)")


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if m is None or report.when != "call":
        return
    status = "PASS" if report.passed else "FAIL"
    detail = dict(report.user_properties).get("detail", "")
    if not detail and report.failed:
        detail = f"error: {report.longrepr.reprcrash.message}" if hasattr(report.longrepr, "reprcrash") else "error"
    _LINES[int(m.group(1))] = f"criterion {m.group(1)}: {status}  {detail}".rstrip()


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_LINES):
        terminalreporter.write_line(_LINES[key])
