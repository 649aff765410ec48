import pytest

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion.

    Lines print immediately (visible with -s) and again in the terminal
    summary (visible regardless of capture).
    """
    def record(number: int, name: str, ok: bool, detail: str = ""):
        status = "PASS" if ok else "FAIL"
        line = f"acceptance {number:02d} {name}: {status}"
        if detail:
            line += f" ({detail})"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
