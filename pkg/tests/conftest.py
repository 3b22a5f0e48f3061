import pytest

_OUTCOMES: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


def _entry(item):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return None
    number, title = marker.args
    return _OUTCOMES.setdefault(number, {"title": title, "passed": True, "ran": False, "details": []})


@pytest.fixture
def record(request):
    """Attach a one-line measurement to the criterion of the running test."""
    entry = _entry(request.node)

    def _record(text: str):
        if entry is not None:
            entry["details"].append(text)

    return _record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    entry = _entry(item)
    if entry is None:
        return
    if rep.when == "call":
        entry["ran"] = True
    if rep.failed:
        entry["passed"] = False
        entry["ran"] = True


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        e = _OUTCOMES[number]
        status = "PASS" if e["passed"] and e["ran"] else ("FAIL" if e["ran"] else "NOT RUN")
        detail = "; ".join(e["details"])
        terminalreporter.write_line(f"criterion {number:>2} {status:<4} {e['title']}" + (f" | {detail}" if detail else ""))
