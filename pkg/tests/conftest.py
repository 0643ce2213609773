import pytest

TITLES = {
    1: "risk-measure axioms",
    2: "replication invariance",
    3: "closed-form entropic requirement",
    4: "primal/dual agreement",
    5: "gradient vs finite differences",
    6: "demand monotonicity",
    7: "equilibrium existence and uniqueness",
    8: "Pareto configuration means zero trade",
    9: "inf-convolution closed form and zero-claim split",
    10: "round-trip positivity",
    11: "stability sweeps",
    12: "agreeability LP",
}

_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Store one verdict per acceptance criterion and echo it."""

    def _record(number: int, passed: bool, detail: str) -> None:
        _RESULTS[number] = (bool(passed), detail)
        print(_line(number))

    return _record


def _line(number: int) -> str:
    if number not in _RESULTS:
        return f"[----] {number:2d} {TITLES[number]}: not run"
    passed, detail = _RESULTS[number]
    return f"[{'PASS' if passed else 'FAIL'}] {number:2d} {TITLES[number]}: {detail}"


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and report.failed and marker.args[0] not in _RESULTS:
        _RESULTS[marker.args[0]] = (False, f"errored before a verdict ({call.excinfo.typename})")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(TITLES):
        terminalreporter.write_line(_line(number))
