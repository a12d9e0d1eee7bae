import pytest

from dpmult.dataio import SyntheticSpec, generate_synthetic, preprocess

_ACCEPTANCE = []


@pytest.fixture(scope="session")
def synthetic_raw():
    return generate_synthetic(SyntheticSpec(seed=0))


@pytest.fixture(scope="session")
def synthetic(synthetic_raw):
    train, test, _ = preprocess(*synthetic_raw)
    return train, test


@pytest.fixture(scope="session")
def small_synthetic():
    train, test = generate_synthetic(SyntheticSpec(n_per_class_train=100, n_test=500, seed=3))
    train, test, _ = preprocess(train, test)
    return train, test


@pytest.fixture
def record(request):
    """Log one acceptance line: criterion id, pass/fail and the measured detail."""

    def _record(criterion: str, passed: bool, detail: str):
        request.node.user_properties.append(("acceptance", (criterion, bool(passed), detail)))
        print(f"[{criterion}] {'PASS' if passed else 'FAIL'}: {detail}")
        return passed

    return _record


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    for key, value in report.user_properties:
        if key == "acceptance":
            _ACCEPTANCE.append(value)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(_ACCEPTANCE, key=lambda r: int(r[0].lstrip("C").split(".")[0])):
        terminalreporter.write_line(f"{criterion:>4} {'PASS' if passed else 'FAIL'}  {detail}")
