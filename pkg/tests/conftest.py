import pytest

_LINES = []


class Criterion:
    """Records one PASS/FAIL line per acceptance criterion and asserts on it."""

    def __call__(self, name, ok, detail):
        line = f"{name}: {'PASS' if ok else 'FAIL'} | {detail}"
        _LINES.append(line)
        print(line)
        assert ok, line


@pytest.fixture
def criterion():
    return Criterion()


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
