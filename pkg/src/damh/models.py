"""Model families: AR(1), irregular 1-D Ornstein-Uhlenbeck, and the
position-velocity OU model.

Positive parameters are stored and sampled on the log scale. A sampler
coordinate vector for each family is::

    linear  (phi, ln tau2, ln sigma2)
    ou1d    (ln gamma, ln lambda2, ln sigma2)
    ou2d    (ln gamma, ln xi2, ln lambda2, ln sigma2, ln tau2)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy.special import gammaln

from .errors import ConfigError, NonPositiveGap
from .series import ObservationSeries, TimeGrid


# ---------------------------------------------------------------------------
# Parameter vectors


class _Theta:
    log_scaled: tuple = ()

    @classmethod
    def names(cls):
        return tuple(f.name for f in fields(cls))

    def as_tuple(self):
        return tuple(getattr(self, n) for n in self.names())

    def to_vector(self):
        out = np.empty(len(self.names()))
        for i, (value, logged) in enumerate(zip(self.as_tuple(), self.log_scaled)):
            out[i] = math.log(value) if logged else value
        return out

    @classmethod
    def from_vector(cls, v):
        vals = [math.exp(x) if logged else float(x) for x, logged in zip(v, cls.log_scaled)]
        return cls(*vals)

    def in_support(self):
        return all(
            math.isfinite(x) and (x > 0 or not logged)
            for x, logged in zip(self.as_tuple(), self.log_scaled)
        )

    def as_dict(self):
        return dict(zip(self.names(), self.as_tuple()))


@dataclass(frozen=True)
class LinearTheta(_Theta):
    phi: float
    tau2: float
    sigma2: float
    log_scaled = (False, True, True)


@dataclass(frozen=True)
class OU1DTheta(_Theta):
    gamma: float
    lambda2: float
    sigma2: float
    log_scaled = (True, True, True)


@dataclass(frozen=True)
class OU2DTheta(_Theta):
    gamma: float
    xi2: float
    lambda2: float
    sigma2: float
    tau2: float
    log_scaled = (True, True, True, True, True)


# ---------------------------------------------------------------------------
# Transition coefficients


@dataclass(frozen=True)
class TransitionCoeffs1D:
    phi: float
    tau2: float


@dataclass(frozen=True)
class TransitionCoeffs2D:
    Phi: np.ndarray
    sigma_x2: float
    sigma_u2: float
    cross: float
    inv_rho_comp: float
    S: np.ndarray
    D: np.ndarray

    @property
    def noise_cov(self):
        return np.array([[self.sigma_x2, self.cross], [self.cross, self.sigma_u2]])

    @property
    def rho(self):
        return self.cross / math.sqrt(self.sigma_x2 * self.sigma_u2)


def _check_gap(dt):
    if not dt > 0:
        raise NonPositiveGap(f"time gap must be positive, got {dt!r}")


def transition_linear(theta):
    return TransitionCoeffs1D(theta.phi, theta.tau2)


def transition_ou1d(theta, dt):
    _check_gap(dt)
    g = theta.gamma
    return TransitionCoeffs1D(
        math.exp(-g * dt), theta.lambda2 / (2 * g) * -math.expm1(-2 * g * dt)
    )


def ou2d_arrays(theta, dt):
    """Vectorised position-velocity coefficients over an array of gaps.

    Returns ``(phi, phi01, sx2, su2, cross)`` where the forward map is
    ``[[1, phi01], [0, phi]]`` and the state-noise covariance is
    ``[[sx2, cross], [cross, su2]]``.
    """
    g, lam2, xi2 = theta.gamma, theta.lambda2, theta.xi2
    dt = np.asarray(dt, dtype=float)
    em = np.expm1(-g * dt)  # e^{-g dt} - 1
    phi = 1.0 + em
    phi01 = -em / g
    sx2 = lam2 * np.expm1(2 * g * dt) * em * em / (2 * g**3) + xi2 * dt
    su2 = lam2 * -np.expm1(-2 * g * dt) / (2 * g)
    cross = lam2 * np.expm1(g * dt) * -np.expm1(-2 * g * dt) / (2 * g**2)
    return phi, phi01, sx2, su2, cross


def transition_ou2d(theta, dt):
    _check_gap(dt)
    phi, phi01, sx2, su2, cross = (float(a) for a in ou2d_arrays(theta, dt))
    Phi = np.array([[1.0, phi01], [0.0, phi]])
    # 1/(1 - rho^2) without the cancellation in sx2*su2 - cross^2
    inv_rho_comp = sx2 / (theta.xi2 * dt)
    r = math.sqrt(inv_rho_comp)
    sx, su = math.sqrt(sx2), math.sqrt(su2)
    rho = cross / (sx * su)
    S = r * np.array([[1 / sx, 0.0], [phi01 / sx - rho * phi / su, phi / (r * su)]])
    D = r * np.array([[-1 / sx, 0.0], [rho / su, -1 / (r * su)]])
    return TransitionCoeffs2D(Phi, sx2, su2, cross, inv_rho_comp, S, D)


# ---------------------------------------------------------------------------
# Priors


@dataclass(frozen=True)
class InverseGamma:
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ConfigError("inverse-gamma shape and scale must be positive")

    def log_density(self, x):
        if not x > 0:
            return -math.inf
        a, b = self.shape, self.scale
        return a * math.log(b) - gammaln(a) - (a + 1) * math.log(x) - b / x

    @property
    def mode(self):
        return self.scale / (self.shape + 1)


@dataclass(frozen=True)
class LogFlat:
    """Density proportional to 1/x on [lo, hi]."""

    lo: float = math.exp(-20)
    hi: float = math.exp(20)

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise ConfigError("log-flat bounds need 0 < lo < hi")

    def log_density(self, x):
        if not self.lo <= x <= self.hi:
            return -math.inf
        return -math.log(x) - math.log(math.log(self.hi) - math.log(self.lo))


@dataclass(frozen=True)
class Flat:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConfigError("flat prior needs lo < hi")

    def log_density(self, x):
        if not self.lo < x < self.hi:
            return -math.inf
        return -math.log(self.hi - self.lo)


@dataclass(frozen=True)
class PriorSpec:
    components: dict

    def __getitem__(self, name):
        return self.components[name]

    def with_component(self, name, prior):
        comps = dict(self.components)
        comps[name] = prior
        return PriorSpec(comps)


def log_prior(theta, priors):
    """Log prior of ``theta`` in sampler coordinates.

    Component densities are evaluated on the original scale; log-stored
    components pick up the ``ln x`` Jacobian of the log transform.
    """
    total = 0.0
    for name, value, logged in zip(theta.names(), theta.as_tuple(), theta.log_scaled):
        if not math.isfinite(value) or (logged and value <= 0):
            return -math.inf
        lp = priors[name].log_density(value)
        if lp == -math.inf:
            return -math.inf
        total += lp + (math.log(value) if logged else 0.0)
    return total


# ---------------------------------------------------------------------------
# Model families


class StateSpaceModel:
    name = ""
    theta_cls = None
    state_dim = 1

    @property
    def param_names(self):
        return self.theta_cls.names()

    @property
    def dim(self):
        return len(self.param_names)

    def theta(self, v):
        if isinstance(v, self.theta_cls):
            return v
        if isinstance(v, dict):
            return self.theta_cls(**v)
        return self.theta_cls.from_vector(v)

    def log_prior(self, v, priors):
        return log_prior(self.theta(v), priors)

    def obs_var(self, theta):
        raise NotImplementedError

    def initial_cov(self, theta):
        raise NotImplementedError


class LinearModel(StateSpaceModel):
    """Regularly sampled AR(1) state observed with Gaussian noise.

    ``init_scale`` is the standard deviation of the state before the first
    observation, so ``x_1 ~ N(0, tau2 + phi^2 * init_scale^2)``.
    """

    name = "linear"
    theta_cls = LinearTheta
    state_dim = 1

    def __init__(self, init_scale=0.0):
        self.init_scale = float(init_scale)

    def coefficients(self, theta, gaps):
        m = len(gaps)
        return np.full(m, float(theta.phi)), np.full(m, float(theta.tau2))

    def initial_cov(self, theta):
        return theta.tau2 + theta.phi**2 * self.init_scale**2

    def obs_var(self, theta):
        return theta.sigma2

    def default_priors(self):
        return PriorSpec({"phi": Flat(-1.0, 1.0), "tau2": LogFlat(), "sigma2": LogFlat()})

    def default_lags(self):
        return constant_lags(1.0)

    def __repr__(self):
        return f"LinearModel(init_scale={self.init_scale})"


class OU1DModel(StateSpaceModel):
    """Irregularly sampled OU state observed with Gaussian noise.

    The first state is ``N(0, init_scale^2)``; the default scale is the
    stationary standard deviation ``sqrt(lambda2 / (2 gamma))``.
    """

    name = "ou1d"
    theta_cls = OU1DTheta
    state_dim = 1

    def __init__(self, init_scale=None):
        self.init_scale = None if init_scale is None else float(init_scale)

    def coefficients(self, theta, gaps):
        gaps = np.asarray(gaps, dtype=float)
        if gaps.size and not np.all(gaps > 0):
            raise NonPositiveGap("time gaps must be positive")
        g = theta.gamma
        return np.exp(-g * gaps), theta.lambda2 / (2 * g) * -np.expm1(-2 * g * gaps)

    def initial_cov(self, theta):
        if self.init_scale is None:
            return theta.lambda2 / (2 * theta.gamma)
        return self.init_scale**2

    def obs_var(self, theta):
        return theta.sigma2

    def default_priors(self):
        return PriorSpec({n: LogFlat() for n in self.param_names})

    def default_lags(self):
        return inverse_gamma_lags(2.0, 0.1)

    def __repr__(self):
        return f"OU1DModel(init_scale={self.init_scale})"


class OU2DModel(StateSpaceModel):
    """Position-velocity OU model for one spatial axis.

    States are ordered (position, velocity). The first state is
    ``N(0, diag(Lx^2, Lu^2))`` with ``Lu`` defaulting to the stationary
    velocity standard deviation. Position has no stationary law, so ``Lx``
    defaults to a diffuse 100.
    """

    name = "ou2d"
    theta_cls = OU2DTheta
    state_dim = 2

    def __init__(self, init_scale_position=100.0, init_scale_velocity=None):
        self.init_scale_position = float(init_scale_position)
        self.init_scale_velocity = (
            None if init_scale_velocity is None else float(init_scale_velocity)
        )

    def coefficients(self, theta, gaps):
        gaps = np.asarray(gaps, dtype=float)
        if gaps.size and not np.all(gaps > 0):
            raise NonPositiveGap("time gaps must be positive")
        return ou2d_arrays(theta, gaps)

    def initial_cov(self, theta):
        lu2 = (
            theta.lambda2 / (2 * theta.gamma)
            if self.init_scale_velocity is None
            else self.init_scale_velocity**2
        )
        return np.diag([self.init_scale_position**2, lu2])

    def obs_var(self, theta):
        return np.diag([theta.sigma2, theta.tau2])

    def default_priors(self):
        return PriorSpec(
            {
                "gamma": InverseGamma(10.0, 0.5),
                "xi2": InverseGamma(5.0, 2.5),
                "lambda2": LogFlat(),
                "sigma2": InverseGamma(5.0, 2.5),
                "tau2": LogFlat(),
            }
        )

    def default_lags(self):
        return constant_lags(1.0)

    def __repr__(self):
        return (
            f"OU2DModel(init_scale_position={self.init_scale_position}, "
            f"init_scale_velocity={self.init_scale_velocity})"
        )


MODELS = {"linear": LinearModel, "ou1d": OU1DModel, "ou2d": OU2DModel}


def make_model(name, **kwargs):
    try:
        cls = MODELS[name]
    except KeyError:
        raise ConfigError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return cls(**{k: v for k, v in kwargs.items() if v is not None})


# ---------------------------------------------------------------------------
# Simulation


def constant_lags(step):
    def sample(rng, size):
        return np.full(size, float(step))

    sample.description = f"constant({step})"
    return sample


def inverse_gamma_lags(shape, scale):
    def sample(rng, size):
        return scale / rng.gamma(shape, 1.0, size)

    sample.description = f"inverse_gamma({shape}, {scale})"
    return sample


def _mvn_2x2_chol(sx2, su2, cross, xi2dt):
    l11 = np.sqrt(sx2)
    l21 = cross / l11
    # su2 - cross^2/sx2 == su2 * xi2 dt / sx2
    l22 = np.sqrt(su2 * xi2dt / sx2)
    return l11, l21, l22


def simulate(model, theta, n, lag_sampler=None, seed=None, rng=None, n_axes=1):
    """Draw a hidden path and its observations.

    Returns ``(grid, states, series)``. ``states`` is ``(n,)`` or
    ``(n, n_axes)`` for 1-D models and ``(n, 2 * n_axes)`` in
    (position, velocity) column pairs for the 2-D model.
    """
    if n < 1:
        raise ConfigError("n must be at least 1")
    theta = model.theta(theta)
    if rng is None:
        rng = np.random.default_rng(seed)
    if lag_sampler is None:
        lag_sampler = model.default_lags()
    if model.name == "linear":
        times = np.arange(1, n + 1, dtype=float)
    else:
        times = np.concatenate([[0.0], np.cumsum(lag_sampler(rng, n - 1))])
    grid = TimeGrid(times)
    gaps = grid.gaps
    coeffs = model.coefficients(theta, gaps)
    P1 = model.initial_cov(theta)
    R = model.obs_var(theta)

    if model.state_dim == 1:
        phi, tau2 = coeffs
        x = np.empty((n, n_axes))
        x[0] = math.sqrt(P1) * rng.standard_normal(n_axes)
        noise = np.sqrt(tau2)[:, None] * rng.standard_normal((n - 1, n_axes))
        for t in range(1, n):
            x[t] = phi[t - 1] * x[t - 1] + noise[t - 1]
        y = x + math.sqrt(R) * rng.standard_normal((n, n_axes))
        if n_axes == 1:
            x, y = x[:, 0], y[:, 0]
        columns = ("y",) if n_axes == 1 else tuple(f"y{j + 1}" for j in range(n_axes))
    else:
        phi, phi01, sx2, su2, cross = coeffs
        l11, l21, l22 = _mvn_2x2_chol(sx2, su2, cross, theta.xi2 * gaps)
        x = np.empty((n, n_axes, 2))
        x[0] = np.sqrt(np.diag(P1)) * rng.standard_normal((n_axes, 2))
        for t in range(1, n):
            e = rng.standard_normal((n_axes, 2))
            k = t - 1
            pos, vel = x[t - 1, :, 0], x[t - 1, :, 1]
            x[t, :, 0] = pos + phi01[k] * vel + l11[k] * e[:, 0]
            x[t, :, 1] = phi[k] * vel + l21[k] * e[:, 0] + l22[k] * e[:, 1]
        obs_sd = np.sqrt(np.diag(R))
        y = x + obs_sd * rng.standard_normal((n, n_axes, 2))
        x = x.reshape(n, 2 * n_axes)
        y = y.reshape(n, 2 * n_axes)
        if n_axes == 1:
            columns = ("y", "v")
        elif n_axes == 2:
            columns = ("x", "vx", "y", "vy")
        else:
            columns = tuple(c for j in range(n_axes) for c in (f"p{j + 1}", f"v{j + 1}"))
    series = ObservationSeries(grid, y, columns)
    return grid, x, series
