import time

import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


def pytest_terminal_summary(terminalreporter):
    lines = terminalreporter.config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1][1:].rstrip(":"))):
            terminalreporter.write_line(line)


class Criterion:
    """Times one acceptance criterion and records its pass/fail line."""

    def __init__(self, config, number: int, name: str, budget: float):
        self.config, self.number, self.name, self.budget = config, number, name, budget
        self.start = time.perf_counter()

    def finish(self, passed: bool, detail: str) -> bool:
        elapsed = time.perf_counter() - self.start
        ok = bool(passed) and elapsed <= self.budget
        line = f"{'PASS' if ok else 'FAIL'} A{self.number}: {self.name} | {detail} | {elapsed:.1f}s of {self.budget:.0f}s"
        self.config.stash[_LINES].append(line)
        print(line)
        return ok


@pytest.fixture
def criterion(request):
    return lambda number, name, budget: Criterion(request.config, number, name, budget)
