"""Shared fixtures and independent density oracles.

Oracle log densities are built on scipy.stats rather than the package's
own helpers so the two sides of every ratio test are computed through
different code paths.
"""

import numpy as np
import pytest
from scipy import stats

try:  # small-matrix workloads: BLAS threading only adds contention
    from threadpoolctl import threadpool_limits

    threadpool_limits(limits=1)
except ImportError:  # pragma: no cover
    pass

from bass.data import assemble_dataset
from bass.model import HyperParams, ModelState, init_state


def gamma_lp(x, shape, rate):
    """Shape/rate gamma log density via scipy (scale parametrization)."""
    return stats.gamma.logpdf(x, a=shape, scale=1.0 / rate)


def norm_lp(x, var):
    return stats.norm.logpdf(x, scale=np.sqrt(var))


def beta_lp(x, a, b):
    return stats.beta.logpdf(x, a, b)


def gig_unnorm_lp(x, p, a, b):
    """Unnormalized GIG log density, for conditional ratio checks."""
    return (p - 1.0) * np.log(x) - 0.5 * (a * x + b / x)


def random_state_for(data, k, seed, hyper=None, hard_z=True):
    """A dimensionally consistent state with every field randomized."""
    rng = np.random.default_rng(seed)
    hyper = hyper or HyperParams()
    state = init_state(data, k, hyper, seed=rng)
    p, m = data.p, data.m
    state.Lambda = rng.normal(0.0, 1.0, (p, k))
    state.Theta = rng.gamma(2.0, 1.0, (p, k)) + 0.05
    state.Delta = rng.gamma(2.0, 1.0, (p, k)) + 0.05
    state.Phi = rng.gamma(2.0, 1.0, (m, k)) + 0.05
    state.Tau = rng.gamma(2.0, 1.0, (m, k)) + 0.05
    state.Eta = rng.gamma(2.0, 1.0, m) + 0.05
    state.Gamma_ = rng.gamma(2.0, 1.0, m) + 0.05
    state.Pi = rng.uniform(0.2, 0.8, m)
    state.SigmaDiag = rng.gamma(3.0, 0.5, p) + 0.1
    if hard_z:
        state.Z = (rng.random((m, k)) < 0.5).astype(float)
    else:
        state.Z = rng.uniform(0.05, 0.95, (m, k))
    return state


@pytest.fixture
def tiny_data():
    """3 features in two blocks (2 + 1), 4 samples."""
    rng = np.random.default_rng(11)
    return assemble_dataset([rng.normal(size=(2, 4)), rng.normal(size=(1, 4))])


@pytest.fixture
def data_426():
    """4 features in two blocks (2 + 2), 6 samples."""
    rng = np.random.default_rng(12)
    return assemble_dataset([rng.normal(size=(2, 6)), rng.normal(size=(2, 6))])
