"""Dense reference computations used to cross-check the fast paths.

Everything here is O(n^2) memory or worse and exists for tests and the
``oracle`` command. The joint state covariance is built by propagating
covariances forward through the transition maps, which shares no code
with the banded precision assembly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import SizeGuard
from .precision import build_precision
from .series import ObservationSeries, TimeGrid

MAX_DENSE = 500


def transition_blocks(model, theta, gaps):
    """Per-step ``Phi`` and noise ``Q`` as ``(n-1, d, d)`` arrays, plus ``P1`` and ``R``."""
    theta = model.theta(theta)
    coeffs = model.coefficients(theta, gaps)
    m = len(gaps)
    if model.state_dim == 1:
        phi, tau2 = coeffs
        Phi = np.asarray(phi, dtype=float).reshape(m, 1, 1)
        Q = np.asarray(tau2, dtype=float).reshape(m, 1, 1)
        P1 = np.array([[model.initial_cov(theta)]])
        R = np.array([[model.obs_var(theta)]])
    else:
        phi, p, sx2, su2, cross = coeffs
        Phi = np.zeros((m, 2, 2))
        Phi[:, 0, 0] = 1.0
        Phi[:, 0, 1] = p
        Phi[:, 1, 1] = phi
        Q = np.empty((m, 2, 2))
        Q[:, 0, 0] = sx2
        Q[:, 0, 1] = Q[:, 1, 0] = cross
        Q[:, 1, 1] = su2
        P1 = np.asarray(model.initial_cov(theta), dtype=float)
        R = np.asarray(model.obs_var(theta), dtype=float)
    return Phi, Q, P1, R


def _as_grid(grid):
    if isinstance(grid, ObservationSeries):
        return grid.grid
    return grid if isinstance(grid, TimeGrid) else TimeGrid(grid)


def dense_state_covariance(model, theta, grid):
    grid = _as_grid(grid)
    n = len(grid)
    if n > MAX_DENSE:
        raise SizeGuard(f"dense oracle limited to n <= {MAX_DENSE}, got {n}")
    Phi, Q, P1, _ = transition_blocks(model, theta, grid.gaps)
    d = P1.shape[0]
    C = np.zeros((n, n, d, d))
    C[0, 0] = P1
    for t in range(1, n):
        C[t, :t] = np.einsum("ij,sjk->sik", Phi[t - 1], C[t - 1, :t])
        C[t, t] = Phi[t - 1] @ C[t - 1, t - 1] @ Phi[t - 1].T + Q[t - 1]
        C[:t, t] = np.transpose(C[t, :t], (0, 2, 1))
    return C.transpose(0, 2, 1, 3).reshape(n * d, n * d)


def dense_oracle_covariance(model, theta, grid):
    """Dense observation covariance ``Sigma_YY`` for a single axis."""
    grid = _as_grid(grid)
    Sxx = dense_state_covariance(model, theta, grid)
    _, _, _, R = transition_blocks(model, theta, grid.gaps[:0])
    return Sxx + np.kron(np.eye(len(grid)), R)


def covariance_from_precision(model, theta, grid):
    """``(I - A^{-1} B)^{-1} B^{-1}`` materialised from the banded blocks."""
    grid = _as_grid(grid)
    if len(grid) > MAX_DENSE:
        raise SizeGuard(f"dense oracle limited to n <= {MAX_DENSE}, got {len(grid)}")
    fact = build_precision(model, theta, grid)
    A = fact.dense_A()
    B = np.diag(fact.B_diag)
    N = A.shape[0]
    return np.linalg.solve(np.eye(N) - np.linalg.solve(A, B), np.diag(1.0 / fact.B_diag))


def dense_log_likelihood(model, theta, series):
    y = _single_axis(model, series)
    cov = dense_oracle_covariance(model, theta, series.grid)
    # Cholesky rather than an eigen-based PSD check: the diffuse 2-D position
    # prior makes this matrix badly conditioned but still positive definite
    c, low = cho_factor(cov, lower=True)
    quad = y @ cho_solve((c, low), y)
    logdet = 2.0 * np.sum(np.log(np.diag(c)))
    return float(-0.5 * (quad + logdet + y.size * np.log(2.0 * np.pi)))


def _single_axis(model, series):
    axes = series.axes(model.state_dim)
    if len(axes) != 1:
        raise ValueError("dense oracle handles a single axis")
    return np.asarray(axes[0], dtype=float).reshape(-1)


@dataclass
class DenseConditionals:
    """Per-time conditional moments from direct Gaussian conditioning.

    ``forecast_*`` describe ``y_t | y_{1:t-1}``; ``filtered_*`` describe
    ``x_t | y_{1:t}``. Shapes are ``(n, d)`` and ``(n, d, d)``.
    """

    forecast_mean: np.ndarray
    forecast_cov: np.ndarray
    filtered_mean: np.ndarray
    filtered_cov: np.ndarray


def dense_conditionals(model, theta, series):
    y = _single_axis(model, series)
    Sxx = dense_state_covariance(model, theta, series.grid)
    _, _, _, R = transition_blocks(model, theta, series.gaps[:0])
    d = R.shape[0]
    n = len(series)
    Syy = Sxx + np.kron(np.eye(n), R)
    fm = np.zeros((n, d))
    fc = np.zeros((n, d, d))
    xm = np.zeros((n, d))
    xc = np.zeros((n, d, d))
    for t in range(n):
        cur = slice(t * d, (t + 1) * d)
        past = slice(0, t * d)
        upto = slice(0, (t + 1) * d)
        if t == 0:
            fc[t] = Syy[cur, cur]
        else:
            cf = cho_factor(Syy[past, past])
            cross = Syy[cur, past]
            fm[t] = cross @ cho_solve(cf, y[past])
            fc[t] = Syy[cur, cur] - cross @ cho_solve(cf, cross.T)
        cf = cho_factor(Syy[upto, upto])
        cross = Sxx[cur, upto]
        xm[t] = cross @ cho_solve(cf, y[upto])
        xc[t] = Sxx[cur, cur] - cross @ cho_solve(cf, cross.T)
    return DenseConditionals(fm, fc, xm, xc)
