"""Integrated autocorrelation time, effective sample size and efficiency per
unit of wall time."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import ZeroVariance
from .samplers import da_mh

KCUT_THRESHOLD = 0.05


def autocorrelation(x, max_lag=None):
    """Biased-normalisation sample autocorrelation ``rho_0 .. rho_max_lag``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        raise ZeroVariance("need at least two samples")
    d = x - x.mean()
    var = float(d @ d) / n
    if not var > 1e-300 * max(1.0, float(np.max(np.abs(x))) ** 2):
        raise ZeroVariance("chain is constant")
    max_lag = n - 1 if max_lag is None else min(int(max_lag), n - 1)
    acov = fftconvolve(d, d[::-1], mode="full")[n - 1 : n + max_lag] / n
    return acov / var


@dataclass(frozen=True)
class IATResult:
    tau: float
    k_cut: int


def iat_with_cutoff(x, threshold=KCUT_THRESHOLD):
    """``tau = 1 + 2 sum_{k=1}^{k_cut} rho_k`` with ``k_cut`` the first lag
    whose autocorrelation drops below ``threshold`` (that lag included)."""
    rho = autocorrelation(x)
    below = np.flatnonzero(rho[1:] < threshold)
    k_cut = int(below[0]) + 1 if below.size else rho.size - 1
    tau = 1.0 + 2.0 * float(np.sum(rho[1 : k_cut + 1]))
    return IATResult(max(1.0, tau), k_cut)


def iat(x, threshold=KCUT_THRESHOLD):
    return iat_with_cutoff(x, threshold).tau


def ess(x, threshold=KCUT_THRESHOLD):
    return np.asarray(x).size / iat(x, threshold)


@dataclass(frozen=True)
class DiagnosticsReport:
    n: int
    iat: np.ndarray
    ess: np.ndarray
    eff: np.ndarray
    k_cut: np.ndarray
    wall_time: float

    @property
    def mean_eff(self):
        return float(np.mean(self.eff))

    @property
    def mean_ess(self):
        return float(np.mean(self.ess))

    @property
    def eff_ut(self):
        return self.mean_eff / self.wall_time if self.wall_time > 0 else math.inf

    @property
    def ess_ut(self):
        return self.mean_ess / self.wall_time if self.wall_time > 0 else math.inf


def efficiency_report(chain, wall_time=None, threshold=KCUT_THRESHOLD, constant_as_n=False):
    """Per-coordinate IAT/ESS/Eff plus the per-second summaries.

    ``chain`` is a :class:`~damh.samplers.Chain` or an ``(n, dim)`` array
    (then ``wall_time`` is required). With ``constant_as_n`` a coordinate
    that never moved is scored ``tau = n`` instead of raising.
    """
    samples = getattr(chain, "samples", chain)
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if wall_time is None:
        wall_time = chain.wall_time
    n, dim = samples.shape
    taus = np.empty(dim)
    kcut = np.zeros(dim, dtype=int)
    for j in range(dim):
        try:
            r = iat_with_cutoff(samples[:, j], threshold)
            taus[j], kcut[j] = r.tau, r.k_cut
        except ZeroVariance:
            if not constant_as_n:
                raise
            taus[j], kcut[j] = float(n), 0
    return DiagnosticsReport(n, taus, n / taus, 1.0 / taus, kcut, float(wall_time))


@dataclass(frozen=True)
class SweepRow:
    eps: float
    alpha1: float
    alpha2: float
    eff: float
    eff_ut: float
    ess: float
    ess_ut: float
    time: float


@dataclass(frozen=True)
class SweepTable:
    rows: tuple

    @property
    def best_ess(self):
        return max(self.rows, key=lambda r: r.ess).eps

    @property
    def best_ess_ut(self):
        return max(self.rows, key=lambda r: r.ess_ut).eps

    @property
    def best_eff(self):
        return max(self.rows, key=lambda r: r.eff).eps

    @property
    def best_eff_ut(self):
        return max(self.rows, key=lambda r: r.eff_ut).eps


def step_size_sweep(target, surrogate, eps_grid, n_iter, theta0=None, seed=None, threads=1):
    """Run one delayed-acceptance chain per step scale and tabulate
    acceptance rates and efficiencies. ``target`` must be reentrant when
    ``threads > 1``."""
    eps_grid = [float(e) for e in eps_grid]
    if not eps_grid:
        raise ValueError("eps grid is empty")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seeds = ss.spawn(len(eps_grid))
    start = surrogate.m if theta0 is None else np.asarray(theta0, dtype=float)

    def run(k):
        chain = da_mh(target, surrogate, start, n_iter, eps=eps_grid[k],
                      seed=np.random.default_rng(seeds[k]))
        rep = efficiency_report(chain, constant_as_n=True)
        return SweepRow(eps_grid[k], chain.stage1_rate, chain.stage2_rate, rep.mean_eff,
                        rep.eff_ut, rep.mean_ess, rep.ess_ut, chain.wall_time)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(run, range(len(eps_grid))))
    else:
        rows = [run(k) for k in range(len(eps_grid))]
    return SweepTable(tuple(rows))
