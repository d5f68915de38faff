"""Collects one PASS/FAIL line per acceptance criterion and prints them at the end."""
import pytest

_RESULTS = {}
_DETAILS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def report(request):
    """Attach a one-line measurement to the current criterion."""
    marker = request.node.get_closest_marker("criterion")

    def _report(text):
        if marker is not None:
            _DETAILS.setdefault(marker.args[0], []).append(text)

    return _report


def pytest_runtest_logreport(report):
    marker = getattr(report, "_criterion", None)
    if marker is None:
        return
    if report.when == "call" or report.failed:
        number, title = marker
        previous = _RESULTS.get(number, (title, True))[1]
        _RESULTS[number] = (title, previous and report.passed)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        rep._criterion = marker.args


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, ok = _RESULTS[number]
        detail = "; ".join(_DETAILS.get(number, []))
        line = f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}"
        terminalreporter.write_line(line + (f" -- {detail}" if detail else ""))
