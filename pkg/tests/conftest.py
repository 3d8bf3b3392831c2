import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_VERDICTS: dict[str, bool] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): test belongs to a numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or (rep.when != "call" and not rep.failed):
        return
    name = mark.args[0]
    _VERDICTS[name] = _VERDICTS.get(name, True) and not rep.failed


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_VERDICTS, key=lambda n: int(n[2:])):
        terminalreporter.write_line(f"{name}: {'PASS' if _VERDICTS[name] else 'FAIL'}")
