import numpy as np
import pytest

import diluteu as d


@pytest.fixture(scope="session")
def rad():
    return d.rademacher()


@pytest.fixture(scope="session")
def norm():
    return d.standard_normal()


@pytest.fixture(scope="session")
def unif():
    return d.uniform(-1.0, 1.0)


@pytest.fixture(scope="session")
def skewed():
    # mean-zero two-point law with a heavy negative atom; sign mean -2/3,
    # so the sign kernel is non-degenerate on it
    return d.table([-1, 5], [5.0 / 6.0, 1.0 / 6.0])


@pytest.fixture(scope="session")
def policy():
    return d.SeedPolicy(master_seed=6)


def rng_of(seed):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
