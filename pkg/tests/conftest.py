import numpy as np
import pytest

from coordlab import prob_core as pc


@pytest.fixture
def uniform_binary():
    return pc.Pmf([0.5, 0.5])


@pytest.fixture
def identity_channel():
    return pc.CondPmf(np.eye(2))


@pytest.fixture
def identity_joint():
    return pc.JointPmf([[0.5, 0.0], [0.0, 0.5]])


def random_pmf(rng, k):
    return pc.Pmf(rng.dirichlet(np.ones(k)))


def random_cond(rng, kx, ky):
    return pc.CondPmf(rng.dirichlet(np.ones(ky), size=kx))
