import numpy as np
import pytest

from skipdiff import GaussianMixture, default_schedule, standard_normal_mixture


@pytest.fixture(scope="session")
def sched50():
    return default_schedule(50)


@pytest.fixture(scope="session")
def std_normal_1d():
    return standard_normal_mixture(1)


@pytest.fixture(scope="session")
def bimodal_1d():
    return GaussianMixture(weights=[0.5, 0.5], means=[[-2.0], [2.0]], variances=[1.0, 1.0])


@pytest.fixture(scope="session")
def bimodal_2d():
    return GaussianMixture(
        weights=[0.5, 0.5],
        means=np.array([[-2.0, 0.0], [2.0, 0.0]]),
        variances=[1.0, 1.0],
    )
