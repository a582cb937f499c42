import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")
    config.addinivalue_line("markers", "companion(n, title): check run alongside criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    rep = (yield).get_result()
    for kind in ("criterion", "companion"):
        mark = item.get_closest_marker(kind)
        if mark is None:
            continue
        if rep.when == "call" or not rep.passed:
            n, title = mark.args
            key = (n, kind == "companion", item.name)
            ok = rep.passed and _results.get(key, (title, True))[1]
            _results[key] = (title, ok)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for (n, companion, name), (title, ok) in sorted(_results.items()):
        label = f"  companion {n:>2}" if companion else f"criterion {n:>2}"
        terminalreporter.write_line(f"{label} {'PASS' if ok else 'FAIL'}: {title}")
