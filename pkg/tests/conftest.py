"""Collects acceptance-criterion verdicts and prints them after the run."""
import pytest

CRITERIA = 11
_VERDICTS: dict[int, tuple[str, str]] = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records a verdict, prints it and asserts it."""

    def record(number: int, ok: bool, detail: str) -> None:
        status = "PASS" if ok else "FAIL"
        _VERDICTS[number] = (status, detail)
        print(f"criterion {number:2d}: {status}  {detail}")
        assert ok, f"criterion {number}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, max(CRITERIA, max(_VERDICTS)) + 1):
        status, detail = _VERDICTS.get(number, ("FAIL", "no verdict recorded (test errored or was deselected)"))
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {detail}")
