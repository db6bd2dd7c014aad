"""Self-tuning random-walk Metropolis and delayed-acceptance MH.

Phase one perturbs one randomly chosen coordinate per iteration and
adapts that coordinate's step size multiplicatively: ``s * e^a`` on
acceptance and ``s / e^b`` on rejection with ``a = (1 - alpha) / alpha * b``,
so ``ln s`` has zero drift exactly when the acceptance rate is ``alpha``.

Phase two fits a Gaussian surrogate ``N(m, C)`` to the phase-one chain and
uses it twice: as the proposal shape ``theta + eps * chol(C) z`` and as a
cheap first-stage screen. Only proposals passing the screen are scored
by the expensive target.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidStart, NumericalError, TooFewSamples


# ---------------------------------------------------------------------------
# Step-size adaptation


def up_increment(alpha, b):
    """``a`` such that the expected change of ``ln s`` vanishes at rate ``alpha``."""
    return (1.0 - alpha) / alpha * b


def tune_step(s, accepted, a, b):
    return s * math.exp(a) if accepted else s / math.exp(b)


@dataclass
class StepSizeState:
    s: np.ndarray
    b: float = 0.1
    alpha_target: np.ndarray | float = 0.44

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float).copy()
        self.alpha_target = np.broadcast_to(
            np.asarray(self.alpha_target, dtype=float), self.s.shape
        ).copy()
        if not np.all(self.s > 0):
            raise ValueError("step sizes must be positive")
        if not np.all((self.alpha_target > 0) & (self.alpha_target < 1)):
            raise ValueError("target acceptance rates must lie in (0, 1)")

    @property
    def a(self):
        return up_increment(self.alpha_target, self.b)

    def update(self, i, accepted):
        a = (1.0 - self.alpha_target[i]) / self.alpha_target[i] * self.b
        self.s[i] = tune_step(self.s[i], accepted, a, self.b)


# ---------------------------------------------------------------------------
# Chains


@dataclass
class Chain:
    """Samples in sampler coordinates plus acceptance bookkeeping.

    For phase-one chains ``coords`` records which coordinate moved at each
    iteration and ``accepted`` whether it moved. For delayed-acceptance
    chains ``stage1`` and ``accepted`` hold the per-stage outcomes.
    """

    samples: np.ndarray
    accepted: np.ndarray
    log_target: np.ndarray
    wall_time: float = 0.0
    coords: np.ndarray | None = None
    stage1: np.ndarray | None = None
    step_sizes: np.ndarray | None = None
    step_history: np.ndarray | None = None
    n_evaluations: int = 0
    eps: float | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    @property
    def acceptance_rate(self):
        return float(np.mean(self.accepted)) if len(self) else math.nan

    def coordinate_rates(self, last_fraction=1.0):
        """Per-coordinate acceptance rates of a phase-one chain."""
        if self.coords is None:
            raise ValueError("not a one-coordinate-at-a-time chain")
        start = int(round(len(self) * (1.0 - last_fraction)))
        c = self.coords[start:]
        acc = self.accepted[start:]
        out = np.full(self.dim, math.nan)
        for i in range(self.dim):
            m = c == i
            if m.any():
                out[i] = acc[m].mean()
        return out

    @property
    def stage1_rate(self):
        """Fraction of proposals passing the surrogate screen."""
        if self.stage1 is None:
            return math.nan
        return float(np.mean(self.stage1)) if len(self) else math.nan

    @property
    def stage2_rate(self):
        """Fraction of screened proposals accepted by the full target."""
        if self.stage1 is None:
            return math.nan
        k = int(np.sum(self.stage1))
        return float(np.sum(self.accepted)) / k if k else math.nan


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _evaluate(target, theta):
    try:
        v = float(target(theta))
    except NumericalError:
        return -math.inf
    return v if not math.isnan(v) else -math.inf


def self_tuning_rwm(target, theta0, n_iter, alpha_target=0.44, b=0.1, s0=None, seed=None,
                    burn_frac=0.2, thin_to=1000, fit=True):
    """One-coordinate-at-a-time random-walk Metropolis with step-size tuning.

    ``s0`` gives the initial per-coordinate proposal standard deviations
    (default 0.1). Returns ``(chain, surrogate)``; the surrogate is ``None``
    when ``fit`` is false.
    """
    rng = _rng(seed)
    theta = np.array(theta0, dtype=float)
    dim = theta.size
    state = StepSizeState(np.full(dim, 0.1) if s0 is None else s0, b, alpha_target)
    lp = _evaluate(target, theta)
    if lp == -math.inf:
        raise InvalidStart("target is not finite at the starting point")
    samples = np.empty((n_iter, dim))
    lps = np.empty(n_iter)
    acc = np.zeros(n_iter, dtype=bool)
    coords = rng.integers(0, dim, size=n_iter)
    noise = rng.standard_normal(n_iter)
    logu = np.log(rng.random(n_iter))
    hist = np.empty((n_iter, dim))
    s = state.s
    a = state.a
    up = np.exp(a)
    down = math.exp(b)
    t0 = time.perf_counter()
    for k in range(n_iter):
        i = coords[k]
        old = theta[i]
        theta[i] = old + s[i] * noise[k]
        lp_new = _evaluate(target, theta)
        if logu[k] < lp_new - lp:
            lp = lp_new
            acc[k] = True
            s[i] *= up[i]
        else:
            theta[i] = old
            s[i] /= down
        samples[k] = theta
        lps[k] = lp
        hist[k] = s
    wall = time.perf_counter() - t0
    chain = Chain(samples, acc, lps, wall, coords=coords, step_sizes=s.copy(),
                  step_history=hist, n_evaluations=n_iter)
    surrogate = fit_surrogate(chain, burn_frac, thin_to) if fit else None
    return chain, surrogate


# ---------------------------------------------------------------------------
# Surrogate


@dataclass(frozen=True)
class SurrogatePosterior:
    """Gaussian approximation ``N(m, C)`` in sampler coordinates."""

    m: np.ndarray
    C: np.ndarray
    chol: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        inv = np.linalg.inv(self.chol)
        norm = -float(np.sum(np.log(np.diag(self.chol)))) - 0.5 * self.m.size * math.log(2 * math.pi)
        object.__setattr__(self, "_inv_chol", inv)
        object.__setattr__(self, "_log_norm", norm)

    @classmethod
    def from_moments(cls, m, C, meta=None):
        m = np.asarray(m, dtype=float)
        C = np.asarray(C, dtype=float)
        C = 0.5 * (C + C.T)
        return cls(m, C, _jittered_cholesky(C), dict(meta or {}))

    @property
    def dim(self):
        return self.m.size

    def log_density(self, theta):
        z = self._inv_chol @ (np.asarray(theta, dtype=float) - self.m)
        return -0.5 * float(z @ z) + self._log_norm

    __call__ = log_density


def _jittered_cholesky(C):
    scale = float(np.max(np.abs(np.diag(C)))) if C.size else 1.0
    scale = scale if scale > 0 else 1.0
    jitter = 0.0
    for _ in range(12):
        try:
            return np.linalg.cholesky(C + jitter * np.eye(C.shape[0]))
        except np.linalg.LinAlgError:
            jitter = scale * 1e-10 if jitter == 0 else jitter * 100
    raise NumericalError("surrogate covariance could not be made positive definite")


def fit_surrogate(chain, burn_frac=0.2, thin_to=1000):
    """Sample mean and covariance of the thinned post-burn-in chain."""
    samples = chain.samples if isinstance(chain, Chain) else np.asarray(chain, dtype=float)
    n = samples.shape[0]
    dim = samples.shape[1] if samples.ndim == 2 else 0
    kept = samples[int(n * burn_frac):]
    if kept.shape[0] < 10 * max(dim, 1):
        raise TooFewSamples(
            f"{kept.shape[0]} post-burn-in samples; need at least {10 * max(dim, 1)}"
        )
    if kept.shape[0] > thin_to:
        idx = np.linspace(0, kept.shape[0] - 1, thin_to).round().astype(int)
        kept = kept[idx]
    m = kept.mean(axis=0)
    C = np.atleast_2d(np.cov(kept, rowvar=False))
    diag = np.diag(C).copy()
    floor = 1e-12 * max(1.0, float(np.max(np.abs(m))) ** 2)
    if np.any(diag <= floor):
        C = C + np.diag(np.where(diag <= floor, floor, 0.0))
    return SurrogatePosterior.from_moments(m, C, {"n_fit": int(kept.shape[0])})


# ---------------------------------------------------------------------------
# Delayed acceptance


def propose_correlated(theta, surrogate, eps, rng):
    z = rng.standard_normal(surrogate.dim)
    return np.asarray(theta, dtype=float) + surrogate.chol @ (eps * z)


def da_mh(target, surrogate, theta0, n_iter, eps=1.0, seed=None, cheap=None):
    """Delayed-acceptance Metropolis-Hastings.

    ``cheap`` is the first-stage log density (the surrogate by default).
    The expensive ``target`` is evaluated only for proposals that pass the
    first stage, so ``chain.n_evaluations == chain.stage1.sum()``.
    """
    rng = _rng(seed)
    cheap = surrogate.log_density if cheap is None else cheap
    theta = np.array(theta0, dtype=float)
    dim = theta.size
    lp = _evaluate(target, theta)
    lq = float(cheap(theta))
    if lp == -math.inf or not math.isfinite(lq):
        raise InvalidStart("target or surrogate is not finite at the starting point")
    samples = np.empty((n_iter, dim))
    lps = np.empty(n_iter)
    s1 = np.zeros(n_iter, dtype=bool)
    s2 = np.zeros(n_iter, dtype=bool)
    steps = (eps * rng.standard_normal((n_iter, dim))) @ surrogate.chol.T
    logu1 = np.log(rng.random(n_iter))
    logu2 = np.log(rng.random(n_iter))
    n_eval = 0
    t0 = time.perf_counter()
    for k in range(n_iter):
        prop = theta + steps[k]
        lq_new = float(cheap(prop))
        if logu1[k] < lq_new - lq:
            s1[k] = True
            lp_new = _evaluate(target, prop)
            n_eval += 1
            if logu2[k] < (lp_new - lp) - (lq_new - lq):
                s2[k] = True
                theta, lp, lq = prop, lp_new, lq_new
        samples[k] = theta
        lps[k] = lp
    wall = time.perf_counter() - t0
    return Chain(samples, s2, lps, wall, stage1=s1, n_evaluations=n_eval, eps=float(eps))


def random_walk_mh(target, theta0, n_iter, chol, eps=1.0, seed=None):
    """Plain Metropolis with proposal ``theta + eps * chol z``."""
    rng = _rng(seed)
    chol = np.atleast_2d(np.asarray(chol, dtype=float))
    theta = np.array(theta0, dtype=float)
    lp = _evaluate(target, theta)
    if lp == -math.inf:
        raise InvalidStart("target is not finite at the starting point")
    samples = np.empty((n_iter, theta.size))
    lps = np.empty(n_iter)
    acc = np.zeros(n_iter, dtype=bool)
    steps = (eps * rng.standard_normal((n_iter, theta.size))) @ chol.T
    logu = np.log(rng.random(n_iter))
    t0 = time.perf_counter()
    for k in range(n_iter):
        prop = theta + steps[k]
        lp_new = _evaluate(target, prop)
        if logu[k] < lp_new - lp:
            theta, lp = prop, lp_new
            acc[k] = True
        samples[k] = theta
        lps[k] = lp
    wall = time.perf_counter() - t0
    return Chain(samples, acc, lps, wall, n_evaluations=n_iter, eps=float(eps))
