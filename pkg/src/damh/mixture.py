"""Gaussian-mixture state estimates over posterior parameter draws."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMixture
from .recursions import filter_moments


@dataclass(frozen=True)
class StateEstimate:
    """Equal-weight mixture summary of ``x_t``; ``mean`` is ``(D,)`` and
    ``var`` is ``(D, D)``."""

    mean: np.ndarray
    var: np.ndarray
    n_components: int
    t: int | None = None
    timestamp: float | None = None

    @property
    def sd(self):
        return np.sqrt(np.diag(self.var))


def mixture_arrays(means, covs):
    """Law-of-total-variance reduction of ``(N, D)`` means and ``(N, D, D)``
    covariances. Works on leading batch axes too: ``(N, ..., D)``."""
    means = np.asarray(means, dtype=float)
    covs = np.asarray(covs, dtype=float)
    N = means.shape[0]
    if N == 0:
        raise EmptyMixture("mixture has no components")
    mean = means.mean(axis=0)
    d = means - mean
    between = np.einsum("n...i,n...j->...ij", d, d) / N
    return mean, covs.mean(axis=0) + between


def mixture_moments(components, t=None, timestamp=None):
    """Combine :class:`~damh.recursions.StateMoments` with equal weights."""
    components = list(components)
    if not components:
        raise EmptyMixture("mixture has no components")
    means = np.array([np.atleast_1d(np.asarray(c.mean, dtype=float)) for c in components])
    D = means.shape[1]
    covs = np.array([np.asarray(c.var, dtype=float).reshape(D, D) for c in components])
    mean, var = mixture_arrays(means, covs)
    return StateEstimate(mean, var, len(components), t, timestamp)


def batch_state_draw(fact, rng=None, z=None):
    """One joint draw ``L^{-T}(W + Z)`` of the hidden states given ``y``.

    Pass ``z`` to fix the standard-normal vector (``z = 0`` gives the
    posterior mean).
    """
    if fact.W is None:
        raise ValueError("factorization was built without observations")
    if z is None:
        z = np.random.default_rng(rng).standard_normal(fact.W.shape)
    return fact.posterior_mean(fact.W + np.asarray(z, dtype=float).reshape(fact.W.shape))


def component_moments(model, thetas, series, threads=1):
    """Filtered means ``(N, n, D)`` and covariances ``(N, n, D, D)``."""
    thetas = list(thetas)
    if not thetas:
        raise EmptyMixture("no parameter draws")

    def run(theta):
        fm = filter_moments(model, theta, series)
        return fm.mean, fm.cov

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            out = list(pool.map(run, thetas))
    else:
        out = [run(th) for th in thetas]
    return np.stack([m for m, _ in out]), np.stack([c for _, c in out])


def posterior_state_sweep(model, thetas, series, threads=1, last_only=False):
    """Mixture state estimates for every time of ``series``.

    ``thetas`` holds parameter draws (theta objects or sampler-coordinate
    vectors, e.g. the rows of a chain subsample).
    """
    if hasattr(thetas, "samples"):
        thetas = thetas.samples
    means, covs = component_moments(model, thetas, series, threads)
    N = means.shape[0]
    if last_only:
        mean, var = mixture_arrays(means[:, -1], covs[:, -1])
        n = len(series)
        return [StateEstimate(mean, var, N, n, float(series.times[-1]))]
    mean, var = mixture_arrays(means, covs)
    return [
        StateEstimate(mean[t], var[t], N, t + 1, float(series.times[t])) for t in range(len(series))
    ]
