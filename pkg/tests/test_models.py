import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from damh.errors import ConfigError, NonPositiveGap
from damh.models import (
    Flat,
    InverseGamma,
    LinearTheta,
    LogFlat,
    OU1DTheta,
    OU2DTheta,
    constant_lags,
    log_prior,
    make_model,
    simulate,
    transition_linear,
    transition_ou1d,
    transition_ou2d,
)

from conftest import OU2D_ROW


def test_transition_linear_is_constant():
    c = transition_linear(LinearTheta(0.9, 0.5, 1.0))
    assert (c.phi, c.tau2) == (0.9, 0.5)
    c = transition_linear(LinearTheta(0.0, 0.7, 1.0))
    assert (c.phi, c.tau2) == (0.0, 0.7)


def test_transition_ou1d_values():
    th = OU1DTheta(0.5, 0.1, 1.0)
    c = transition_ou1d(th, 2.0)
    assert c.phi == pytest.approx(0.367879441171, abs=1e-9)
    assert c.tau2 == pytest.approx(0.0864664716763, abs=1e-9)
    small = transition_ou1d(th, 1e-12)
    assert small.phi == pytest.approx(1.0) and small.tau2 == pytest.approx(0.0, abs=1e-12)
    big = transition_ou1d(th, 1e4)
    assert big.phi == pytest.approx(0.0, abs=1e-12) and big.tau2 == pytest.approx(0.1)


@pytest.mark.parametrize("dt", [0.0, -1.0])
def test_nonpositive_gap_rejected(dt):
    with pytest.raises(NonPositiveGap):
        transition_ou1d(OU1DTheta(0.5, 0.1, 1.0), dt)
    with pytest.raises(NonPositiveGap):
        transition_ou2d(OU2DTheta(**OU2D_ROW), dt)


def test_ou2d_row_coefficients():
    c = transition_ou2d(OU2DTheta(**OU2D_ROW), 1.0)
    assert c.Phi[0, 0] == 1.0 and c.Phi[1, 0] == 0.0
    assert np.all(np.linalg.eigvalsh(c.noise_cov) > 0)
    assert np.allclose(np.linalg.inv(c.D).T @ c.S.T, -c.Phi, atol=1e-12, rtol=0)
    assert c.rho >= 0
    assert c.inv_rho_comp == pytest.approx(1.0 / (1.0 - c.rho**2), rel=1e-6)


def test_ou2d_zero_gap_limit():
    c = transition_ou2d(OU2DTheta(**OU2D_ROW), 1e-9)
    assert np.allclose(c.Phi, np.eye(2), atol=1e-8)
    assert np.max(np.abs(c.noise_cov)) < 1e-8


def test_ou2d_identity_random_draws():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        th = OU2DTheta(*np.exp(rng.uniform(np.log([1e-3, 1e-2, 1e-3, 1e-2, 1e-2]),
                                           np.log([2.0, 5.0, 1.0, 5.0, 5.0]))))
        dt = float(np.exp(rng.uniform(np.log(0.01), np.log(50.0))))
        c = transition_ou2d(th, dt)
        worst = max(worst, np.max(np.abs(np.linalg.inv(c.D).T @ c.S.T + c.Phi)))
    assert worst < 1e-10


def test_ou2d_noise_matches_stochastic_integrals():
    """Monte Carlo of the stochastic integrals driving one transition.

    Velocity noise is int lam e^{-g(dt-s)} dW_s and position noise is
    int (lam/g) e^{g s}(1 - e^{-g dt}) dW_s plus an independent xi W'_dt,
    both discretised with a midpoint rule on a fine sub-grid.
    """
    th = OU2DTheta(gamma=0.5, xi2=0.3, lambda2=0.8, sigma2=1.0, tau2=1.0)
    dt = 1.0
    g, lam = th.gamma, math.sqrt(th.lambda2)
    M, reps, chunk = 64, 1_000_000, 100_000
    h = dt / M
    s = (np.arange(M) + 0.5) * h
    wu = lam * np.exp(-g * (dt - s))
    wx = lam / g * np.exp(g * s) * (1 - np.exp(-g * dt))
    rng = np.random.default_rng(7)
    samples = []
    for _ in range(reps // chunk):
        dW = rng.standard_normal((chunk, M)) * math.sqrt(h)
        u = dW @ wu
        x = dW @ wx + math.sqrt(th.xi2 * dt) * rng.standard_normal(chunk)
        samples.append(np.column_stack([x, u]))
    z = np.concatenate(samples)
    emp = np.cov(z, rowvar=False)
    want = transition_ou2d(th, dt).noise_cov
    # standard error of each covariance entry for Gaussian data
    se = np.sqrt((want**2 + np.outer(np.diag(want), np.diag(want))) / reps)
    assert np.all(np.abs(emp - want) < 3 * se)


@settings(max_examples=200, deadline=None)
@given(
    g=st.floats(1e-3, 5.0), lam2=st.floats(1e-3, 5.0),
    d1=st.floats(1e-3, 20.0), d2=st.floats(1e-3, 20.0),
)
def test_ou1d_coefficient_laws(g, lam2, d1, d2):
    th = OU1DTheta(g, lam2, 1.0)
    c1, c2, c12 = (transition_ou1d(th, d) for d in (d1, d2, d1 + d2))
    assert 0 < c1.phi < 1 and c1.tau2 > 0
    assert c12.phi == pytest.approx(c1.phi * c2.phi, rel=1e-12)
    assert c12.tau2 == pytest.approx(c2.phi**2 * c1.tau2 + c2.tau2, rel=1e-10)
    if d2 > d1:
        assert c2.phi <= c1.phi and c2.tau2 >= c1.tau2


def test_inverse_gamma_mode():
    ig = InverseGamma(10.0, 0.5)
    assert ig.mode == pytest.approx(0.5 / 11)
    xs = np.linspace(0.01, 0.2, 2001)
    dens = [ig.log_density(x) for x in xs]
    assert xs[int(np.argmax(dens))] == pytest.approx(0.5 / 11, abs=1e-4)


def test_log_prior_support_and_jacobian():
    m = make_model("ou2d")
    pri = m.default_priors()
    th = OU2DTheta(**OU2D_ROW)
    lp = log_prior(th, pri)
    assert math.isfinite(lp)
    bad = OU2DTheta(**{**OU2D_ROW, "xi2": -1.0})
    assert log_prior(bad, pri.with_component("xi2", InverseGamma(5, 2.5))) == -math.inf
    # a log-flat component contributes -ln x + ln x = constant in log coordinates
    lin = make_model("linear")
    p = lin.default_priors()
    a = log_prior(LinearTheta(0.3, 0.1, 1.0), p)
    b = log_prior(LinearTheta(0.3, 7.0, 1.0), p)
    assert a == pytest.approx(b)
    assert log_prior(LinearTheta(1.5, 0.1, 1.0), p) == -math.inf


def test_prior_validation():
    with pytest.raises(ConfigError):
        InverseGamma(0, 1)
    with pytest.raises(ConfigError):
        LogFlat(2.0, 1.0)
    with pytest.raises(ConfigError):
        Flat(1.0, 1.0)


@pytest.mark.parametrize("cls,vals", [
    (LinearTheta, (-0.3, 0.2, 1.7)),
    (OU1DTheta, (0.5, 0.1, 1.0)),
    (OU2DTheta, tuple(OU2D_ROW.values())),
])
def test_log_scale_round_trip(cls, vals):
    th = cls(*vals)
    back = cls.from_vector(th.to_vector())
    assert np.allclose(back.as_tuple(), vals, rtol=1e-14, atol=0)


def test_simulate_reproducible_and_shapes():
    m = make_model("linear")
    g1, x1, s1 = simulate(m, dict(phi=0.9, tau2=0.5, sigma2=1.0), 500, seed=1)
    g2, x2, s2 = simulate(m, dict(phi=0.9, tau2=0.5, sigma2=1.0), 500, seed=1)
    assert len(s1) == 500 and np.array_equal(s1.values, s2.values) and np.array_equal(x1, x2)
    assert np.all(g1.gaps == 1.0)
    # L0 = 0: x1 ~ N(0, tau2) (x0 pinned at 0)
    m2 = make_model("ou2d")
    g, x, s = simulate(m2, OU2D_ROW, 50, constant_lags(1.0), seed=3, n_axes=2)
    assert s.values.shape == (50, 4) and s.columns == ("x", "vx", "y", "vy")


def test_simulate_noiseless_observations_equal_states():
    m = make_model("ou1d")
    _, x, s = simulate(m, dict(gamma=0.5, lambda2=0.1, sigma2=0.0), 100, seed=2)
    assert np.array_equal(x, s.values)


def test_simulate_irregular_grid():
    m = make_model("ou1d")
    g, _, _ = simulate(m, dict(gamma=0.5, lambda2=0.1, sigma2=1.0), 300, seed=4)
    assert np.all(g.gaps > 0)
    assert np.std(g.gaps) > 0


def test_simulate_stationary_variance():
    m = make_model("linear")
    n = 100_000
    phi, tau2, s2 = 0.7, 0.5, 1.0
    _, _, s = simulate(m, dict(phi=phi, tau2=tau2, sigma2=s2), n, seed=11)
    want = tau2 / (1 - phi**2) + s2
    # variance of the sample variance of an AR(1)+noise series (approx.)
    tau_int = 1 + 2 * phi**2 * (tau2 / (1 - phi**2)) ** 2 / want**2 / (1 - phi**2)
    se = want * math.sqrt(2 * tau_int / n)
    assert abs(np.var(s.values) - want) < 4 * se


def test_make_model_unknown():
    with pytest.raises(ConfigError):
        make_model("nope")
