import pytest

_RESULTS: list[tuple[str, str, str]] = []


class _Recorder:
    def __call__(self, criterion: str, passed: bool | None, detail: str = "") -> None:
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        _RESULTS.append((criterion, status, detail))
        print(f"[{status}] {criterion}: {detail}")


@pytest.fixture
def record_criterion():
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, status, detail in _RESULTS:
        terminalreporter.write_line(f"{status}  {criterion}  {detail}")
