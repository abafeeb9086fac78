"""One PASS/FAIL line per acceptance criterion at the end of the run."""
import pytest

_results: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    number = getattr(report, "criterion", None)
    if number is None:
        return
    entry = _results.setdefault(number, {"title": report.criterion_title, "ok": True,
                                         "info": []})
    if report.failed:
        entry["ok"] = False
    if report.when == "call":
        entry["info"] += [f"{k}={v}" for k, v in report.user_properties]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report = outcome.get_result()
        report.criterion, report.criterion_title = marker.args


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        r = _results[number]
        status = "PASS" if r["ok"] else "FAIL"
        info = f"  [{', '.join(r['info'])}]" if r["info"] else ""
        terminalreporter.write_line(f"{status}  criterion {number:>2}: {r['title']}{info}")
