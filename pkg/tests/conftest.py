import numpy as np
import pytest

from msvar.priors import NiwPrior
from msvar.regimes import DirichletPriorSet
from msvar.sampler import MsVarModel, TrainingData


@pytest.fixture(scope="session")
def tiny_model():
    """Two-regime scalar AR(1) model with flat Dirichlet priors (n=1, p=1, l=1)."""
    priors = (
        NiwPrior(pi0=np.array([0.05, 0.4]), lambda0=0.4 * np.eye(2), nu0=6.0,
                 v0=np.array([[0.8]])),
        NiwPrior(pi0=np.array([-0.3, 0.6]), lambda0=0.3 * np.eye(2), nu0=7.0,
                 v0=np.array([[0.4]])),
    )
    dirichlet = DirichletPriorSet(np.ones((3, 2)))
    return MsVarModel(priors=priors, dirichlet=dirichlet, p=1, l=1)


@pytest.fixture(scope="session")
def tiny_data():
    """Three observations for the tiny model."""
    return TrainingData(
        y=np.array([[0.3], [-0.2], [0.5]]),
        psi=np.ones((3, 1)),
        y_init=np.array([[0.1]]),
    )


def random_niw_prior(gen, n, d, scale=1.0):
    """A random well-conditioned NIW prior for property tests."""
    a = gen.standard_normal((d, d + 2))
    lambda0 = scale * (a @ a.T / (d + 2) + 0.5 * np.eye(d))
    b = gen.standard_normal((n, n + 2))
    v0 = b @ b.T / (n + 2) + 0.5 * np.eye(n)
    return NiwPrior(
        pi0=gen.standard_normal(n * d) * 0.5,
        lambda0=lambda0,
        nu0=n + 1 + gen.uniform(1.0, 4.0),
        v0=v0,
    )
