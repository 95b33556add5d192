import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("qnlab", deadline=None, max_examples=50, derandomize=True)
settings.load_profile("qnlab")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
