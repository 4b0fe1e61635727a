import pytest

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")
    config.addinivalue_line("markers", "slow: multi-second training or benchmarking run")


def pytest_runtest_logreport(report):
    marker = getattr(report, "_criterion", None)
    if marker is None:
        return
    number, title = marker
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "seen": False, "secs": 0.0})
    if report.when in ("setup", "call"):
        entry["secs"] += report.duration
        entry["ok"] &= report.outcome == "passed"
        entry["seen"] |= report.when == "call" or report.outcome != "passed"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result()._criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        status = "PASS" if e["ok"] and e["seen"] else ("FAIL" if e["seen"] else "NOT RUN")
        terminalreporter.write_line(f"criterion {number}: {status}  {e['title']}  ({e['secs']:.1f}s)")


@pytest.fixture
def rng():
    return make_rng(1234)


