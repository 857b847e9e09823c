"""Collects per-criterion outcomes of the acceptance suite and prints them at the end."""

import pytest

_OUTCOMES = {}   # criterion number -> [title, passed, notes]


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    entry = _OUTCOMES.setdefault(number, [title, True, []])
    entry[1] = entry[1] and report.passed
    entry[2].extend(getattr(item, "criterion_notes", []))


@pytest.fixture
def note(request):
    """Attach a measured value to the criterion line of the current test."""
    request.node.criterion_notes = []

    def add(text):
        request.node.criterion_notes.append(text)
    return add


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        title, passed, notes = _OUTCOMES[number]
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}"
        if notes:
            line += "  [" + "; ".join(notes) + "]"
        terminalreporter.write_line(line)
