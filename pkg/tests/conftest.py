import pytest

_RESULTS_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS_KEY] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(number, title, ok, detail)``."""
    results = request.config.stash[_RESULTS_KEY]

    def record(number, title, ok, detail=""):
        line = f"AC{number:<2d} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        results.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS_KEY, [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(results, key=lambda r: r[0]):
        terminalreporter.write_line(line)
