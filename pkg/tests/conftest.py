import pytest

_LINES_KEY = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one ``PASS``/``FAIL`` line and echo it live."""
    lines = request.config.stash.setdefault(_LINES_KEY, [])

    def record(label: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} {label}: {detail}"
        lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(" ")[0])):
            terminalreporter.write_line(line)
