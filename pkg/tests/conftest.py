import numpy as np
import pytest

from damh.models import LinearModel, OU1DModel, OU2DModel, inverse_gamma_lags, simulate

# 2-D parameter row used throughout (gamma, xi2, lambda2, sigma2, tau2)
OU2D_ROW = dict(gamma=0.0113, xi2=0.6521, lambda2=0.0066, sigma2=0.1231, tau2=0.3173)
LINEAR_TRUE = dict(phi=0.9, tau2=0.5, sigma2=1.0)
OU1D_TRUE = dict(gamma=0.5, lambda2=0.1, sigma2=1.0)


@pytest.fixture
def linear():
    return LinearModel()


@pytest.fixture
def ou1d():
    return OU1DModel()


@pytest.fixture
def ou2d():
    return OU2DModel()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_theta(model, rng):
    if model.name == "linear":
        return model.theta_cls(rng.uniform(-0.95, 0.95), rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0))
    if model.name == "ou1d":
        return model.theta_cls(rng.uniform(0.05, 2.0), rng.uniform(0.05, 2.0), rng.uniform(0.1, 2.0))
    return model.theta_cls(rng.uniform(0.005, 0.5), rng.uniform(0.1, 2.0), rng.uniform(0.001, 0.1),
                           rng.uniform(0.05, 1.0), rng.uniform(0.05, 1.0))


def sim_series(model, theta, n, seed, lags=None):
    if lags is None and model.name != "linear":
        lags = inverse_gamma_lags(2.0, 0.1) if model.name == "ou1d" else inverse_gamma_lags(3.0, 2.0)
    return simulate(model, theta, n, lags, seed=seed)
