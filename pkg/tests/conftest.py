from collections import defaultdict

import pytest

_criteria: dict[int, dict] = defaultdict(lambda: {"title": "", "ok": True, "ran": False})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    entry = _criteria[marker.args[0]]
    entry["title"] = marker.args[1]
    if rep.when == "call" or rep.failed:
        entry["ran"] = True
        entry["ok"] &= rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "PASS" if entry["ran"] and entry["ok"] else ("FAIL" if entry["ran"] else "NOT RUN")
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {entry['title']}")
