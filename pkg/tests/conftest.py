import numpy as np
import pytest

from rilab.gff import factorize
from rilab.interlacements import InterlacementSampler
from rilab.lattice import Window
from rilab.potential import green_table


@pytest.fixture(scope="session")
def G3():
    return green_table(3, 7)


@pytest.fixture(scope="session")
def W3():
    return Window.centered(3, 3)


@pytest.fixture(scope="session")
def fact3(G3, W3):
    return factorize(W3, G3)


@pytest.fixture(scope="session")
def ri3(G3, W3):
    return InterlacementSampler(W3, G3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record and print one pass/fail line for an acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def report(number: int, ok: bool, detail: str):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
