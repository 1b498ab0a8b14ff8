import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def acceptance(request):
    """record(number, title, ok, detail) stores one summary line per criterion."""
    lines = request.config.stash[_LINES]

    def record(number, title, ok, detail=""):
        line = f"criterion {number} {title}: {'PASS' if ok else 'FAIL'} {detail}".rstrip()
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
