from collections import OrderedDict

import pytest

_outcomes: "OrderedDict[int, dict]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    entry = _outcomes.setdefault(number, {"title": title, "passed": 0, "failed": []})
    if report.passed:
        entry["passed"] += 1
    else:
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        entry = _outcomes[number]
        total = entry["passed"] + len(entry["failed"])
        status = "PASS" if not entry["failed"] else "FAIL"
        line = f"criterion {number:>2} {status}: {entry['title']} ({entry['passed']}/{total} checks)"
        if entry["failed"]:
            line += " failing: " + ", ".join(entry["failed"])
        terminalreporter.write_line(line)
