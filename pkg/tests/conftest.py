import sys
from pathlib import Path

import pytest

from adaptvm import kernel

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE: dict[int, dict] = {}
_NODES: dict[str, int] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion covered by the test")


@pytest.fixture(params=kernel.available(), ids=lambda k: k.IMPLEMENTATION)
def kernel_impl(request):
    return request.param


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m is not None:
            num, title = m.args
            _ACCEPTANCE.setdefault(num, {"title": title, "tests": {}})
            _NODES[item.nodeid] = num


def pytest_runtest_logreport(report):
    num = _NODES.get(report.nodeid)
    if num is None:
        return
    tests = _ACCEPTANCE[num]["tests"]
    if report.failed:
        tests[report.nodeid] = "failed"
    elif report.skipped:
        tests.setdefault(report.nodeid, "skipped")
    elif report.when == "call":
        tests.setdefault(report.nodeid, "passed")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        info = _ACCEPTANCE[num]
        results = info["tests"].values()
        if not results:
            status = "NOT RUN"
        elif any(r == "failed" for r in results):
            status = "FAIL"
        elif all(r == "skipped" for r in results):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"criterion {num:>2}: {status}  {info['title']}")
