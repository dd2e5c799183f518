import numpy as np
import pytest

from felogit.cmle import fit_cmle
from felogit.montecarlo import DgpConfig, generate


@pytest.fixture(scope="session")
def dgp1_t2():
    data = generate(DgpConfig(1, 2, 1000, 1.0, seed=11, reps=1), 0)
    return data, fit_cmle(data)


@pytest.fixture(scope="session")
def dgp2_t3():
    data = generate(DgpConfig(2, 3, 600, 1.0, seed=5, reps=1), 0)
    return data, fit_cmle(data)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
