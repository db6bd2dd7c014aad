"""O(1)-per-step recursions for forecast and filtered state moments.

The forecast distribution ``y_t | y_{1:t-1}`` is ``N(mu_bar_t, Sigma_bar_t)``
and the filtered state ``x_t | y_{1:t}`` has mean ``K B1 mu_bar + (I - K B1) y``
and covariance ``B1^{-1} - K``, where ``B1`` is the per-step observation
precision and ``K`` the gain block. In one dimension::

    K_t      = sigma^4 / (tau_t^2 + sigma^2 + phi_t^2 (sigma^2 - K_{t-1}))
    mu_bar_t = phi_t K_{t-1} mu_bar_{t-1} / sigma^2 + phi_t (1 - K_{t-1}/sigma^2) y_{t-1}
    Sigma_bar_t = sigma^4 / K_t

The step-by-step API (:func:`init_forecast`, :func:`forecast_step`,
:func:`state_moments`) mirrors these formulas directly. The loops in
:func:`filter_moments` and :func:`recursive_log_likelihood` are the same
algebra unrolled into scalar arithmetic for speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalBreakdown
from .models import log_prior as _log_prior
from .models import make_model
from .precision import LOG_2PI, NEG_INF, LogPosteriorValue

TOL = 1e-9
_CHUNK = 4096


@dataclass(frozen=True)
class ForecastState:
    """Gain ``K`` and forecast moments at step ``t`` (1-based)."""

    t: int
    K: float | np.ndarray
    mu_bar: float | np.ndarray
    sig_bar: float | np.ndarray


@dataclass(frozen=True)
class StateMoments:
    mean: float | np.ndarray
    var: float | np.ndarray


def _with_init_scale(model, L0):
    if L0 is None:
        return model
    if model.state_dim == 2:
        lx, lu = L0
        return make_model(model.name, init_scale_position=lx, init_scale_velocity=lu)
    return make_model(model.name, init_scale=L0)


def init_forecast(model, theta, L0=None):
    """Forecast state for the first observation.

    ``L0`` overrides the model's initial state scale (a pair for the
    position-velocity model).
    """
    theta = model.theta(theta)
    model = _with_init_scale(model, L0)
    P1 = model.initial_cov(theta)
    if model.state_dim == 1:
        s2 = theta.sigma2
        K = s2 * s2 / (s2 + P1)
        return ForecastState(1, K, 0.0, s2 * s2 / K)
    Rv = np.diag(model.obs_var(theta))
    K = np.diag(Rv**2 / (Rv + np.diag(P1)))
    B1 = np.diag(1.0 / Rv)
    sig_bar = np.linalg.inv(B1 @ K @ B1)
    return ForecastState(1, K, np.zeros(2), sig_bar)


def _check_1d(K, s2, t):
    if not (0 < K <= s2 * (1 + TOL)) or not math.isfinite(K):
        raise NumericalBreakdown(f"gain {K!r} left (0, sigma2]", step=t)


def _check_2d(K, Rinv_diag, t):
    scale = float(np.max(1.0 / Rinv_diag))
    if not np.all(np.isfinite(K)):
        raise NumericalBreakdown("non-finite gain", step=t)
    if np.min(np.linalg.eigvalsh(K)) < -TOL * scale or np.min(
        np.linalg.eigvalsh(np.diag(1.0 / Rinv_diag) - K)
    ) < -TOL * scale:
        raise NumericalBreakdown("gain left the positive semi-definite band", step=t)


def forecast_step(state, theta, coeffs, y_prev):
    """Advance the forecast state by one observation.

    ``coeffs`` is a :class:`~damh.models.TransitionCoeffs1D` or
    :class:`~damh.models.TransitionCoeffs2D` for the gap into step
    ``state.t + 1``; ``y_prev`` is the observation at ``state.t``.
    """
    t = state.t + 1
    if np.ndim(state.K) == 0:
        s2 = theta.sigma2
        phi, tau2 = coeffs.phi, coeffs.tau2
        Kp = state.K
        K = s2 * s2 / (tau2 + s2 + phi * phi * (s2 - Kp))
        _check_1d(K, s2, t)
        mu = phi / s2 * Kp * state.mu_bar + phi * (1 - Kp / s2) * y_prev
        return ForecastState(t, K, mu, s2 * s2 / K)
    Rv = np.array([theta.sigma2, theta.tau2])
    B1 = np.diag(1.0 / Rv)
    Binv = np.diag(Rv)
    Phi = coeffs.Phi
    Dinv = np.linalg.inv(coeffs.D)
    sig_bar = Dinv.T @ Dinv + Phi @ (Binv - state.K) @ Phi.T + Binv
    sig_bar = 0.5 * (sig_bar + sig_bar.T)
    K = np.linalg.inv(B1 @ sig_bar @ B1)
    K = 0.5 * (K + K.T)
    _check_2d(K, 1.0 / Rv, t)
    I = np.eye(2)
    mu = Phi @ state.K @ B1 @ state.mu_bar + Phi @ (I - state.K @ B1) @ np.asarray(y_prev)
    return ForecastState(t, K, mu, sig_bar)


def state_moments(state, theta, y_t):
    """Filtered moments of ``x_t`` given the forecast state at ``t``."""
    if np.ndim(state.K) == 0:
        s2 = theta.sigma2
        K = state.K
        return StateMoments(K * state.mu_bar / s2 + (1 - K / s2) * y_t, s2 - K)
    Rv = np.array([theta.sigma2, theta.tau2])
    KB = state.K / Rv  # K @ B1
    mean = KB @ state.mu_bar + (np.eye(2) - KB) @ np.asarray(y_t)
    return StateMoments(mean, np.diag(Rv) - state.K)


# ---------------------------------------------------------------------------
# Unrolled loops


def _loop_1d(phi, tau2, s2, P1, y, keep):
    n = len(y)
    s4 = s2 * s2
    S = s2 + P1
    K = s4 / S
    mu = 0.0
    y_prev = 0.0
    acc_logdet = 0.0
    acc_quad = 0.0
    out = np.empty((4, n)) if keep else None
    log = math.log
    # index t of the padded arrays holds the coefficients for the gap into step t
    phi = np.concatenate([[0.0], phi])
    tau2 = np.concatenate([[0.0], tau2])
    # convert in fixed-size chunks so the per-step cost does not grow with n
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        ys = y[start:stop].tolist()
        ph = phi[start:stop].tolist()
        tq = tau2[start:stop].tolist()
        rows = [] if keep else None
        for j, yt in enumerate(ys):
            t = start + j
            if t:
                p = ph[j]
                mu = p * (K * mu + (s2 - K) * y_prev) / s2
                S = tq[j] + s2 + p * p * (s2 - K)
                K = s4 / S
                if not (K > 0 and K <= s2 * (1 + TOL)):
                    raise NumericalBreakdown(f"gain {K!r} left (0, sigma2]", step=t + 1)
            d = yt - mu
            acc_logdet += log(S)
            acc_quad += d * d / S
            if keep:
                rows.append((mu, S, (K * mu + (s2 - K) * yt) / s2, s2 - K))
            y_prev = yt
        if keep:
            out[:, start:stop] = np.array(rows).T
    if not (math.isfinite(acc_logdet) and math.isfinite(acc_quad)):
        raise NumericalBreakdown("non-finite forecast likelihood", step=n)
    return acc_logdet, acc_quad, out


def _loop_2d(coeffs, s2, t2, P1, Y, keep):
    phi, p01, q11, q22, q12 = (a.tolist() for a in coeffs)
    n = len(Y)
    y0 = Y[:, 0].tolist()
    y1 = Y[:, 1].tolist()
    # first step: Sigma_bar = P1 + R, diagonal
    S11 = P1[0, 0] + s2
    S22 = P1[1, 1] + t2
    S12 = P1[0, 1]
    det = S11 * S22 - S12 * S12
    k11 = s2 * s2 * S22 / det
    k12 = -s2 * t2 * S12 / det
    k22 = t2 * t2 * S11 / det
    m1 = m2 = 0.0
    acc_logdet = 0.0
    acc_quad = 0.0
    out = np.empty((n, 10)) if keep else None
    log = math.log
    for t in range(n):
        if t:
            k = t - 1
            # filtered state at t-1: mean Y + K B1 (mu_bar - Y), cov R - K
            d1 = m1 - y0[k]
            d2 = m2 - y1[k]
            f1 = y0[k] + k11 * d1 / s2 + k12 * d2 / t2
            f2 = y1[k] + k12 * d1 / s2 + k22 * d2 / t2
            c11 = s2 - k11
            c12 = -k12
            c22 = t2 - k22
            p = p01[k]
            f = phi[k]
            m1 = f1 + p * f2
            m2 = f * f2
            S11 = q11[k] + c11 + 2 * p * c12 + p * p * c22 + s2
            S12 = q12[k] + f * (c12 + p * c22)
            S22 = q22[k] + f * f * c22 + t2
            det = S11 * S22 - S12 * S12
            if not det > 0:
                raise NumericalBreakdown("forecast covariance lost positive definiteness", step=t + 1)
            k11 = s2 * s2 * S22 / det
            k12 = -s2 * t2 * S12 / det
            k22 = t2 * t2 * S11 / det
            if not (0 < k11 <= s2 * (1 + TOL) and 0 < k22 <= t2 * (1 + TOL)):
                raise NumericalBreakdown("gain left the positive semi-definite band", step=t + 1)
        e1 = y0[t] - m1
        e2 = y1[t] - m2
        acc_logdet += log(det)
        acc_quad += (S22 * e1 * e1 - 2 * S12 * e1 * e2 + S11 * e2 * e2) / det
        if keep:
            d1 = m1 - y0[t]
            d2 = m2 - y1[t]
            out[t] = (
                m1,
                m2,
                S11,
                S12,
                S22,
                y0[t] + k11 * d1 / s2 + k12 * d2 / t2,
                y1[t] + k12 * d1 / s2 + k22 * d2 / t2,
                s2 - k11,
                -k12,
                t2 - k22,
            )
    if not (math.isfinite(acc_logdet) and math.isfinite(acc_quad)):
        raise NumericalBreakdown("non-finite forecast likelihood", step=n)
    return acc_logdet, acc_quad, out


def _run_axis(model, theta, gaps, P1, y, keep):
    coeffs = model.coefficients(theta, gaps)
    if model.state_dim == 1:
        phi, tau2 = coeffs
        return _loop_1d(phi, tau2, theta.sigma2, P1, np.asarray(y, dtype=float), keep)
    phi, p, sx2, su2, cross = coeffs
    return _loop_2d((phi, p, sx2, su2, cross), theta.sigma2, theta.tau2, P1, y, keep)


@dataclass
class FilterMoments:
    """Per-time forecast and filtered moments for every axis.

    The state vector at each time concatenates the axes in column order,
    so shapes are ``(n, D)`` for means and ``(n, D, D)`` for covariances
    with ``D = state_dim * n_axes``.
    """

    times: np.ndarray
    forecast_mean: np.ndarray
    forecast_cov: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    log_likelihood: float


def _prepare(model, theta, series):
    theta = model.theta(theta)
    return theta, series.gaps, model.initial_cov(theta), series.axes(model.state_dim)


def filter_moments(model, theta, series):
    """Forecast and filtered moments at every observation time."""
    theta, gaps, P1, axes = _prepare(model, theta, series)
    n = len(series)
    d = model.state_dim
    D = d * len(axes)
    fm = np.zeros((n, D))
    fc = np.zeros((n, D, D))
    xm = np.zeros((n, D))
    xc = np.zeros((n, D, D))
    total = 0.0
    for j, y in enumerate(axes):
        logdet, quad, out = _run_axis(model, theta, gaps, P1, y, True)
        total += -0.5 * (logdet + quad + n * d * LOG_2PI)
        s = slice(j * d, (j + 1) * d)
        if d == 1:
            fm[:, j], fc[:, j, j], xm[:, j], xc[:, j, j] = out
        else:
            fm[:, s] = out[:, 0:2]
            fc[:, s, s] = out[:, [2, 3, 3, 4]].reshape(n, 2, 2)
            xm[:, s] = out[:, 5:7]
            xc[:, s, s] = out[:, [7, 8, 8, 9]].reshape(n, 2, 2)
    return FilterMoments(series.times.copy(), fm, fc, xm, xc, total)


def recursive_log_likelihood(model, theta, series, priors=None):
    """Sum of one-step forecast log densities plus the log prior."""
    theta = model.theta(theta)
    lp = 0.0
    if priors is not None:
        lp = _log_prior(theta, priors)
        if lp == -math.inf:
            return NEG_INF
    theta, gaps, P1, axes = _prepare(model, theta, series)
    n = len(series)
    quad = logdet = 0.0
    for y in axes:
        ld, q, _ = _run_axis(model, theta, gaps, P1, y, False)
        logdet += ld
        quad += q
    const = -0.5 * n * model.state_dim * len(axes) * LOG_2PI
    value = -0.5 * (logdet + quad) + const + lp
    # the summed forecast log-determinant is reported in the ``log_det_L`` slot
    return LogPosteriorValue(
        value, quadratic=-0.5 * quad, log_det_L=-0.5 * logdet, constant=const, log_prior=lp
    )
