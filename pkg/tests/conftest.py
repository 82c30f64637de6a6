import functools
import warnings

import numpy as np
import pytest

from stokesdarcy.app.cases import CASES
from stokesdarcy.app.runner import discretize
from stokesdarcy.fem import ParameterWarning, PhysicalParams


@functools.lru_cache(maxsize=None)
def disc_for(case: str, resolution: int, mu: float = 1.0, K: float = 1.0, alpha: float = 0.0):
    """Cached discretization; the cases take (mu, K) only for the manufactured one."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ParameterWarning)
        params = PhysicalParams(mu, K, alpha)
        definition = CASES[case](mu, K) if case == "manufactured" else CASES[case]()
        return discretize(definition, resolution, params)


@functools.lru_cache(maxsize=None)
def dense_sigma_for(case: str, resolution: int, mu: float = 1.0, K: float = 1.0):
    return disc_for(case, resolution, mu, K).op.dense_sigma()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rel(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
