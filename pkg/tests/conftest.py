import numpy as np
import pytest

from dynbl.gaussian import symmetrize
from dynbl.market import MarketModel, reference_market, reference_picks, reference_views


def random_spd(rng, n, scale=0.1):
    a = rng.standard_normal((n, n))
    return symmetrize(scale * (a @ a.T / n + 0.2 * np.eye(n)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def market():
    return reference_market()


@pytest.fixture
def picks():
    return reference_picks()


@pytest.fixture
def views(market):
    return reference_views(0.4, market)


def prior_draw(market, views, rng):
    """One view drawn from the prior model."""
    T = views.length
    x_T = T * market.mu_x + np.sqrt(T) * rng.standard_normal(market.n_assets) @ market.chol.lower.T
    z = rng.standard_normal(views.n_views) @ np.linalg.cholesky(views.omega).T
    return views.P @ x_T + np.sqrt(T) * z


def scalar_market(mu=0.08, sigma2=0.04, r_f=0.02, T=1.0):
    return MarketModel([mu], [[sigma2]], r_f=r_f, horizon=T)
