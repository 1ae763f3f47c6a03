import pytest

_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    failed_early = report.when == "setup" and report.outcome != "passed"
    if report.when == "call" or failed_early:
        detail = dict(report.user_properties).get("criterion")
        name = detail or report.nodeid.split("::")[-1]
        _ACCEPTANCE.append(("PASS" if report.passed else "FAIL", name))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, line in _ACCEPTANCE:
        terminalreporter.write_line(f"[{status}] {line}")


@pytest.fixture
def criterion(record_property):
    """Attach a one-line result description to the current acceptance test."""

    def record(text):
        record_property("criterion", text)
        print(text)

    return record
