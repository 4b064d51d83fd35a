import pytest

from blowup_lab.damping import BUILTIN, DampingCalculus

_CRITERIA = {}


@pytest.fixture(scope="session")
def calcs():
    return {name: DampingCalculus(spec) for name, spec in BUILTIN.items()}


@pytest.fixture
def record(request):
    """Collect detail strings for the acceptance summary line of this test."""
    lines = []
    request.node.criterion_details = lines
    return lines.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    failed = report.failed or (report.when == "setup" and report.skipped)
    if report.when == "call" or failed:
        n, title = mark.args
        prev = _CRITERIA.get(n)
        if prev is None or prev[1]:
            _CRITERIA[n] = (title, not failed, list(getattr(item, "criterion_details", [])))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok, details = _CRITERIA[n]
        tr.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{'; '.join(details)}]" if details else ""))
    passed = sum(ok for _, ok, _ in _CRITERIA.values())
    tr.write_line(f"{passed}/{len(_CRITERIA)} criteria passed")
