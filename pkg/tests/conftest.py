import pytest

_VERDICTS = []


@pytest.fixture
def verdict(request):
    """Record a ``PASS``/``FAIL`` line for an acceptance criterion, then assert on it."""

    def record(number, title, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {title} | {detail}"
        _VERDICTS.append((number, line))
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for _, line in sorted(_VERDICTS, key=lambda item: str(item[0])):
        terminalreporter.write_line(line)
