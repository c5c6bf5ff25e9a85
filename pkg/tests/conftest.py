import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cscn.model import validate_config

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def desk():
    return validate_config(profile="desk", seed=0)


def unit_config(**overrides):
    """Small linear-unit network for hand-checkable cases."""
    raw = dict(num_sbs=1, num_antennas=1, num_users=1, num_files=1, file_sizes=1.0, fractional_capacity=0.0,
               max_power=100.0, sinr_target=4.0, bandwidth=1.0, noise_power=1.0, edge_slope=1.0,
               fronthaul_efficiency=1e-3, block_length=1, patterns=1, shadowing_std_db=0.0)
    raw.update(overrides)
    return validate_config(raw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """Print one line per acceptance criterion that ran."""
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
