import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from neumann_mc.wos import precompute_circle_table

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_table():
    """A coarse circle table with stored paths, built once per session."""
    return precompute_circle_table(1e-4, 20_000, 2_000, np.random.default_rng(2024))


@pytest.fixture(scope="session")
def table_with_integrals():
    return precompute_circle_table(1e-4, 20_000, 0, np.random.default_rng(99), direct=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance gate report ----------------------------------------------------------

_GATE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_GATE] = {}


@pytest.fixture
def gate(request):
    """``gate(name, ok, detail)`` records one acceptance line and prints it."""
    lines = request.config.stash[_GATE]

    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        lines[name] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_GATE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for name in sorted(lines):
            terminalreporter.write_line(lines[name])
