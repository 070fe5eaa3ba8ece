import pytest

_CRITERIA = []


@pytest.fixture
def report_criterion():
    """Record one status line (``passed=None`` marks an excluded criterion)."""

    def report(number, passed, detail):
        status = "EXCLUDED" if passed is None else "PASS" if passed else "FAIL"
        line = f"criterion {number}: {status}  {detail}"
        _CRITERIA.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
