"""Collects acceptance outcomes and prints one pass/fail line per criterion."""
import pytest

_RESULTS: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    entry = _RESULTS.setdefault(n, {"title": title, "status": [], "detail": []})
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        entry["status"].append(rep.outcome)
        note = item.user_properties and dict(item.user_properties).get("result")
        if note:
            entry["detail"].append(note)
        if rep.skipped and isinstance(rep.longrepr, tuple):
            entry["detail"].append(rep.longrepr[2])


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS, key=lambda k: (int(str(k).rstrip("ab")), str(k))):
        e = _RESULTS[n]
        if "failed" in e["status"]:
            verdict = "FAIL"
        elif all(s == "skipped" for s in e["status"]):
            verdict = "SKIP"
        else:
            verdict = "PASS"
        detail = "; ".join(e["detail"])
        terminalreporter.write_line(f"criterion {n:<3} {verdict:<4}  {e['title']}"
                                    + (f"  [{detail}]" if detail else ""))
