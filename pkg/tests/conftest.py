"""Collects acceptance-criterion outcomes and prints one line per criterion."""

import pytest

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): test belongs to acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed or rep.skipped):
        return
    n = marker.args[0]
    ok, details = _criteria.get(n, (True, []))
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and not detail:
        detail = f"{item.name} failed"
    if detail:
        details = details + [detail]
    _criteria[n] = (ok and rep.passed, details)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        ok, details = _criteria[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {'; '.join(details)}")
