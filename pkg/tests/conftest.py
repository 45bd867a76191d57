"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

import pytest

_RESULTS: dict[int, tuple[str, str]] = {}
_NOTES: dict[int, list[str]] = {}


@pytest.fixture
def note(request):
    """Attach a measured value to the summary line of the test's criterion."""
    number = request.node.get_closest_marker("criterion").args[0]
    return lambda text: _NOTES.setdefault(number, []).append(text)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed
    if report.when == "call" or failed:
        previous = _RESULTS.get(number, ("PASS", title))[0]
        _RESULTS[number] = ("FAIL" if failed or previous == "FAIL" else "PASS", title)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        status, title = _RESULTS[number]
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}")
        for text in _NOTES.get(number, []):
            terminalreporter.write_line(f"         {text}")
