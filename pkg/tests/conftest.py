import pytest

from cpsbench import powerkin as pk
from cpsbench.control import ControllerConfig

# Deterministic timing and noiseless plugs: durations and watts are exact.
EXACT = ControllerConfig(latency=(0.0, 0.0), noise=pk.QUIET)


@pytest.fixture
def exact_config():
    return EXACT
