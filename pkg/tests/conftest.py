import pytest

from asdtrack.benchmarks import build_scenario, run_scenario

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def closed_loop():
    """Cached closed-loop runs keyed by (name, case, ref, overrides)."""
    cache = {}

    def get(name, case=None, ref="step", window=None, **overrides):
        key = (name, case, ref, window, tuple(sorted(overrides.items())))
        if key not in cache:
            sc = build_scenario(name, case, **overrides)
            cache[key] = run_scenario(sc, ref, window=window)
        return cache[key]

    return get


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
