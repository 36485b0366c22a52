import pytest

from hihomog import builtin
from hihomog.cell import solve_all


@pytest.fixture(scope="session")
def cells():
    """Cell data per builtin, solved once per session."""
    cache = {}

    def get(name, **params):
        key = (name, tuple(sorted(params.items())))
        if key not in cache:
            A = builtin(name, **params)
            cache[key] = solve_all(A, 4 * A.band + 2)
        return cache[key]

    return get


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
