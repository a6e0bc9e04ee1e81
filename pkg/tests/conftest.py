import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dyadrep.form import make_form

settings.register_profile("repo", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def hilbert():
    return make_form("hilbert")


@pytest.fixture(scope="session")
def power2():
    return make_form("power:0.5")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    def record(number, name, ok, detail, elapsed, limit=None):
        timed = limit is None or elapsed <= limit
        status = "PASS" if ok and timed else "FAIL"
        budget = f", {elapsed:.1f}s" + (f" of {limit:.0f}s" if limit is not None else "")
        line = f"criterion {number:>2} {name}: {status} ({detail}{budget})"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return ok and timed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
