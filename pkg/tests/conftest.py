import numpy as np
import pytest

from zknf.profiles import GridSpec1D


@pytest.fixture(scope="session")
def grid():
    return GridSpec1D.default(2, 1024)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def verdict(request):
    """Record and print one PASS/FAIL line; returns the flag for asserting."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def record(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance")
        for line in lines:
            terminalreporter.write_line(line)
