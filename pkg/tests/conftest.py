"""Prints one PASS/FAIL/SKIP line per acceptance criterion at the end of the run."""

import re

_RESULTS = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_(A\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = (int(m.group(1)[1:]), m.group(1), m.group(2).replace("_", " "))
    if report.skipped:
        _RESULTS.setdefault(key, "SKIP")
    elif report.failed:
        _RESULTS[key] = "FAIL"
    elif report.when == "call":
        _RESULTS.setdefault(key, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for (_, name, label), outcome in sorted(_RESULTS.items()):
        terminalreporter.write_line(f"{name:<4} {outcome:<4}  {label}")
