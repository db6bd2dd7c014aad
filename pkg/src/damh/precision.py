"""Banded joint precision and the batch parameter log-posterior.

For hidden states ``X`` and observations ``Y`` the joint precision is::

    [[ A, -B],
     [-B,  B]]

with ``B`` the diagonal observation precision and ``A - B`` the prior
precision of the states. Both ``A`` and ``A - B`` are banded (tridiagonal
for 1-D models, lower bandwidth 3 for the interleaved position-velocity
ordering), so the quadratic form and log-determinant of ``Sigma_YY^{-1}``
come from two banded Cholesky factorizations:

    y' Sigma_YY^{-1} y = (L^{-1} B y)' (L^{-1} (A - B) y)
    ln det Sigma_YY^{-1} = sum ln B_ii - 2 sum ln L_ii + 2 sum ln R_ii

where ``L L' = A`` and ``R R' = A - B``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky_banded
from scipy.linalg.lapack import dtbtrs

from .errors import NotPositiveDefinite
from .models import log_prior as _log_prior
from .series import ObservationSeries, TimeGrid

LOG_2PI = math.log(2 * math.pi)
JITTER = 1e-10


def _prior_band_1d(phi, tau2, P1):
    n = phi.size + 1
    ab = np.zeros((2, n))
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_t = 1.0 / tau2
        ab[0, 0] = 1.0 / P1
        ab[0, 1:] = inv_t
        ab[0, :-1] += phi * phi * inv_t
        ab[1, :-1] = -phi * inv_t
    return ab


def _prior_band_2d(coeffs, xi2, gaps, P1):
    phi, p, sx2, su2, cross = coeffs
    n = phi.size + 1
    N = 2 * n
    ab = np.zeros((4, N))
    with np.errstate(divide="ignore", invalid="ignore"):
        # Q^{-1} through det(Q) = su2 * xi2 * dt
        det = su2 * xi2 * gaps
        q11, q12, q22 = su2 / det, -cross / det, sx2 / det
        # M = Q^{-1} Phi
        m11, m12 = q11, q11 * p + q12 * phi
        m21, m22 = q12, q12 * p + q22 * phi
    P1inv = np.linalg.inv(P1)
    ab[0, 0], ab[1, 0], ab[0, 1] = P1inv[0, 0], P1inv[1, 0], P1inv[1, 1]
    # Q^{-1} on diagonal blocks 1..n-1
    ab[0, 2::2] = q11
    ab[1, 2::2] = q12
    ab[0, 3::2] = q22
    # Phi' Q^{-1} Phi on diagonal blocks 0..n-2
    ab[0, 0:-2:2] += m11
    ab[1, 0:-2:2] += m12
    ab[0, 1:-2:2] += p * m12 + phi * m22
    # -Q^{-1} Phi on the sub-diagonal blocks
    ab[2, 0:-2:2] = -m11
    ab[1, 1:-2:2] = -m12
    ab[3, 0:-2:2] = -m21
    ab[2, 1:-2:2] = -m22
    return ab


def _band_to_dense(ab):
    bw, N = ab.shape
    out = np.zeros((N, N))
    for k in range(bw):
        idx = np.arange(N - k)
        out[idx + k, idx] = ab[k, : N - k]
        out[idx, idx + k] = ab[k, : N - k]
    return out


def _sym_band_matvec(ab, x):
    out = ab[0][:, None] * x
    N = ab.shape[1]
    for k in range(1, ab.shape[0]):
        sub = ab[k, : N - k][:, None]
        out[k:] += sub * x[: N - k]
        out[: N - k] += sub * x[k:]
    return out


def _cholesky(ab, what):
    if not np.all(np.isfinite(ab)):
        raise NotPositiveDefinite(f"{what} has non-finite entries")
    try:
        return cholesky_banded(ab, lower=True)
    except (LinAlgError, ValueError):
        pass
    jittered = ab.copy()
    jittered[0] += JITTER * np.abs(ab[0])
    try:
        return cholesky_banded(jittered, lower=True)
    except (LinAlgError, ValueError):
        raise NotPositiveDefinite(f"{what} is not positive definite") from None


def _tri_solve(band, b, trans="N"):
    x, info = dtbtrs(band, b, uplo="L", trans=trans)
    if info != 0:
        raise NotPositiveDefinite(f"triangular solve failed (info={info})")
    return x


@dataclass
class PrecisionFactorization:
    """Banded blocks of the joint precision and their Cholesky factors.

    Bands use LAPACK lower storage: ``band[k, j] == M[j + k, j]``.
    """

    state_dim: int
    n: int
    prior_band: np.ndarray
    A_band: np.ndarray
    B_diag: np.ndarray
    L_band: np.ndarray
    R_band: np.ndarray
    W: np.ndarray | None = None

    @property
    def lower_bandwidth(self):
        return self.A_band.shape[0] - 1

    @property
    def bandwidth(self):
        return 2 * self.lower_bandwidth + 1

    def effective_bandwidth(self, tol=0.0):
        nz = [k for k in range(1, self.A_band.shape[0]) if np.any(np.abs(self.A_band[k]) > tol)]
        return 2 * (max(nz) if nz else 0) + 1

    def dense_A(self):
        return _band_to_dense(self.A_band)

    def dense_prior(self):
        return _band_to_dense(self.prior_band)

    def dense_L(self):
        return np.tril(_band_to_dense(self.L_band))

    def dense_R(self):
        return np.tril(_band_to_dense(self.R_band))

    def whiten(self, y):
        """``W = L^{-1} B y`` for a stacked observation matrix ``(N, k)``."""
        return _tri_solve(self.L_band, self.B_diag[:, None] * y)

    def posterior_mean(self, W=None):
        W = self.W if W is None else W
        return _tri_solve(self.L_band, W, trans="T")

    def log_det_terms(self):
        return (
            0.5 * float(np.sum(np.log(self.B_diag))),
            -float(np.sum(np.log(self.L_band[0]))),
            float(np.sum(np.log(self.R_band[0]))),
        )


def stack_observations(model, series):
    """Observation matrix ``(N, n_axes)`` in the precision's state order."""
    if model.state_dim == 1:
        return np.column_stack(series.axes(1))
    return np.column_stack([a.reshape(-1) for a in series.axes(2)])


def build_precision(model, theta, grid, y=None):
    """Assemble ``A``, ``B`` and factor ``A`` and ``A - B``.

    ``y`` may be an :class:`ObservationSeries` or a stacked ``(N, k)``
    matrix; when given, the whitened vector ``W`` is filled in too.
    """
    theta = model.theta(theta)
    if isinstance(grid, ObservationSeries):
        grid = grid.grid
    elif not isinstance(grid, TimeGrid):
        grid = TimeGrid(grid)
    gaps = grid.gaps
    n = len(grid)
    coeffs = model.coefficients(theta, gaps)
    P1 = model.initial_cov(theta)
    if model.state_dim == 1:
        phi, tau2 = coeffs
        if not (P1 > 0 and np.all(tau2 > 0)):
            raise NotPositiveDefinite("state noise variances must be positive")
        prior = _prior_band_1d(phi, tau2, P1)
        B = np.full(n, 1.0 / model.obs_var(theta))
    else:
        if not (np.all(np.diag(P1) > 0) and theta.xi2 > 0):
            raise NotPositiveDefinite("state noise covariances must be positive definite")
        prior = _prior_band_2d(coeffs, theta.xi2, gaps, P1)
        B = np.tile(1.0 / np.diag(model.obs_var(theta)), n)
    if not np.all(np.isfinite(B)) or not np.all(B > 0):
        raise NotPositiveDefinite("observation variances must be positive")
    A = prior.copy()
    A[0] += B
    L = _cholesky(A, "A")
    R = _cholesky(prior, "A - B")
    fact = PrecisionFactorization(model.state_dim, n, prior, A, B, L, R)
    if y is not None:
        if isinstance(y, ObservationSeries):
            y = stack_observations(model, y)
        fact.W = fact.whiten(np.asarray(y, dtype=float).reshape(len(B), -1))
    return fact


@dataclass(frozen=True)
class LogPosteriorValue:
    """Log posterior with its additive breakdown.

    ``value`` is a proper log density in ``y`` (the ``2 pi`` constant is
    included) plus the log prior.
    """

    value: float
    quadratic: float = 0.0
    log_det_B: float = 0.0
    log_det_L: float = 0.0
    log_det_R: float = 0.0
    constant: float = 0.0
    log_prior: float = 0.0

    def __float__(self):
        return float(self.value)

    @property
    def log_likelihood(self):
        return self.value - self.log_prior

    def parts(self):
        return (
            self.quadratic,
            self.log_det_B,
            self.log_det_L,
            self.log_det_R,
            self.constant,
            self.log_prior,
        )


NEG_INF = LogPosteriorValue(-math.inf, log_prior=-math.inf)


def log_posterior(model, theta, series, priors=None):
    theta = model.theta(theta)
    lp = 0.0
    if priors is not None:
        lp = _log_prior(theta, priors)
        if lp == -math.inf:
            return NEG_INF
    y = stack_observations(model, series)
    fact = build_precision(model, theta, series.grid, y)
    V = _tri_solve(fact.L_band, _sym_band_matvec(fact.prior_band, y))
    quad = -0.5 * float(np.sum(fact.W * V))
    k = y.shape[1]
    dB, dL, dR = fact.log_det_terms()
    const = -0.5 * y.size * LOG_2PI
    parts = (quad, k * dB, k * dL, k * dR, const, lp)
    return LogPosteriorValue(math.fsum(parts), *parts)
