import sys
import numpy as np
import pytest

from nbody_index import central_config as ccm
from nbody_index.nbody_core import MassSystem


@pytest.fixture(scope="session")
def kepler_cc():
    sys_, guess = ccm.preset("kepler1d")
    return ccm.find_cc(sys_, guess)


@pytest.fixture(scope="session")
def lagrange_cc():
    sys_, guess = ccm.preset("lagrange_equal")
    return ccm.find_cc(sys_, guess)


@pytest.fixture(scope="session")
def euler_cc():
    sys_, guess = ccm.preset("euler_collinear")
    return ccm.find_cc(sys_, guess)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_configuration(rng, sys_: MassSystem, min_dist=0.2):
    """Random well-separated configuration."""
    while True:
        q = rng.normal(size=(sys_.n_bodies, sys_.dim_d))
        d = [np.linalg.norm(q[i] - q[j]) for i in range(len(q)) for j in range(i)]
        if min(d) > min_dist:
            return q


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is None or not acc.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acc.RESULTS):
        terminalreporter.write_line(acc.RESULTS[n])
