import numpy as np
import pytest

from webster_tract.config import RunConfig

ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines):
        terminalreporter.write_line(line)


@pytest.fixture
def acceptance_log(request):
    """Record one PASS/FAIL line per acceptance criterion; lines are printed in the terminal summary."""
    store = request.config.stash[ACCEPTANCE_KEY]

    def record(number: int, passed: bool, detail: str):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        store.append(line)
        return passed

    return record


@pytest.fixture
def fast_cfg() -> RunConfig:
    """Coarse grid and short duration for cheap end-to-end checks."""
    return RunConfig().replace(grid={"nx": 32}, voice={"duration": 0.3})


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
