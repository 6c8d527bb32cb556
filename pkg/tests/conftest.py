import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from trihybrid.metrics import Problem
from trihybrid.model import SystemConfig
from trihybrid.optimizer import initial_beamformer
from trihybrid.scenario import random_scenario

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def small_cfg():
    return SystemConfig(num_users=2, ps_per_chain=2, elements_per_rhs=4, num_sense_dirs=2,
                        rate_threshold=6.0).with_snr_db(10)


@pytest.fixture
def small_instance(small_cfg):
    """A random feasible point on the small configuration, rate penalty active."""
    rng = np.random.default_rng(7)
    scn = random_scenario(small_cfg, 7, desired_gains=rng.uniform(0.0, 0.05, 2))
    bf = initial_beamformer(small_cfg, rng)
    bf = bf.replace(rhs_amplitudes=rng.uniform(0.05, 0.95, bf.rhs_amplitudes.shape))
    return small_cfg, scn, bf, Problem.build(scn, small_cfg)
