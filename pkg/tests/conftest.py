import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gensm.system import derive_config
from util import ACCEPTANCE_LINES

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def table_cfg():
    """8x8, two antennas per group, four groups, two RF chains, 5 dB."""
    return derive_config(8, 8, 2, 4, 2, rho=10 ** 0.5)
