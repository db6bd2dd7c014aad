"""Streaming sliding-window estimator.

The filter learns a surrogate posterior on the first ``L`` observations,
then for each new observation runs delayed-acceptance MH on the latest
``L`` observations (warm-started from the previous draw) and reports the
Gaussian-mixture estimate of the current state. A realised second-stage
acceptance rate below ``threshold`` triggers a fresh learning phase on the
current window; a time gap of at least ``cutoff`` seconds halts the stream.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, NonMonotoneTime, DuplicateTimestamp
from .mixture import StateEstimate, component_moments, mixture_arrays
from .oracle import transition_blocks
from .pipeline import DEFAULT_EPS, LogTarget, default_start
from .recursions import recursive_log_likelihood
from .samplers import da_mh, self_tuning_rwm
from .series import ObservationSeries, TimeGrid


@dataclass(frozen=True)
class WindowConfig:
    L: int = 100
    threshold: float = 0.7
    cutoff: float = 300.0
    phase1_iters: int = 5000
    phase2_iters: int = 10000
    n_mixture: int = 100
    eps: float = DEFAULT_EPS
    horizon: float = 0.0
    seed: int | None = None
    center_positions: bool = True
    threads: int = 1

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise ConfigError("window length L must be an integer >= 2")
        if not 0 <= self.threshold < 1:
            raise ConfigError("threshold must lie in [0, 1)")
        if not self.cutoff > 0:
            raise ConfigError("cutoff must be positive")
        if self.phase1_iters < 1 or self.phase2_iters < 1 or self.n_mixture < 1:
            raise ConfigError("iteration counts and n_mixture must be positive")
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if self.horizon < 0:
            raise ConfigError("horizon must be non-negative")


# ---------------------------------------------------------------------------
# Events


@dataclass(frozen=True)
class PhaseOneComplete:
    step: int
    m: np.ndarray
    C: np.ndarray
    rates: np.ndarray
    step_sizes: np.ndarray
    kind: str = field(default="phase1", init=False)


@dataclass(frozen=True)
class Estimate:
    step: int
    timestamp: float
    estimate: StateEstimate
    alpha1: float
    alpha2: float
    forecast: StateEstimate | None = None
    kind: str = field(default="estimate", init=False)


@dataclass(frozen=True)
class SurrogateRefreshed:
    step: int
    timestamp: float
    alpha2: float
    kind: str = field(default="refreshed", init=False)


@dataclass(frozen=True)
class Halted:
    step: int
    timestamp: float
    gap: float
    kind: str = field(default="halted", init=False)


# ---------------------------------------------------------------------------
# Helpers


def check_threshold(alpha2, threshold):
    """Refresh when the realised stage-two rate is strictly below ``threshold``.

    A NaN rate (no proposal passed the first stage) never triggers.
    """
    return bool(alpha2 < threshold)


def window_bounds(t, L):
    """1-based inclusive bounds of the window ending at observation ``t``."""
    return max(1, t - L + 1), t


def window_log_posterior(model, theta, window, priors=None):
    if len(window) < 2:
        raise DataError("window needs at least two observations")
    return recursive_log_likelihood(model, theta, window, priors)


def _position_columns(model, width):
    if model.state_dim != 2:
        return np.zeros(width, dtype=bool)
    return np.arange(width) % 2 == 0


# ---------------------------------------------------------------------------
# Filter


class SlidingWindowFilter:
    """Push-based state machine; see the module docstring.

    ``push(t, value)`` returns the events produced by that observation.
    """

    def __init__(self, model, config=None, priors=None, surrogate=None, theta0=None,
                 columns=()):
        self.model = model
        self.config = WindowConfig() if config is None else config
        self.priors = model.default_priors() if priors is None else priors
        self.surrogate = surrogate
        self.theta = None if theta0 is None else np.asarray(theta0, dtype=float)
        self.columns = tuple(columns)
        self._times = deque(maxlen=self.config.L)
        self._values = deque(maxlen=self.config.L)
        self._seeds = np.random.SeedSequence(self.config.seed)
        self.step = 0
        self.halted = False
        self._pending = None
        self.last_alpha1 = math.nan
        self.last_alpha2 = math.nan

    def _rng(self):
        return np.random.default_rng(self._seeds.spawn(1)[0])

    def _window(self):
        values = np.array(self._values, dtype=float)
        offset = np.zeros(values.shape[1:] or (1,))
        if self.config.center_positions and self.model.state_dim == 2:
            mask = _position_columns(self.model, values.shape[1])
            offset = np.where(mask, values[0], 0.0)
            values = values - offset
        series = ObservationSeries(TimeGrid(np.array(self._times)), values, self.columns)
        return series, offset

    def _learn(self, window):
        start = self.theta if self.theta is not None else default_start(self.model, window)
        target = LogTarget(self.model, window, self.priors)
        chain, surrogate = self_tuning_rwm(
            target, start, self.config.phase1_iters, seed=self._rng(),
            thin_to=1000,
        )
        self.surrogate = surrogate
        self.theta = chain.samples[-1].copy()
        return chain

    def _estimate(self, window, offset):
        cfg = self.config
        target = LogTarget(self.model, window, self.priors)
        rng = self._rng()
        chain = da_mh(target, self.surrogate, self.theta, cfg.phase2_iters, eps=cfg.eps, seed=rng)
        self.theta = chain.samples[-1].copy()
        self.last_alpha1 = chain.stage1_rate
        self.last_alpha2 = chain.stage2_rate
        idx = np.linspace(0, len(chain) - 1, min(cfg.n_mixture, len(chain))).round().astype(int)
        draws = chain.samples[idx]
        tail = window.window(len(window) - 1, len(window))
        means, covs = component_moments(self.model, draws, window, cfg.threads)
        means_t, covs_t = means[:, -1], covs[:, -1]
        mean, var = mixture_arrays(means_t, covs_t)
        t_now = float(tail.times[0])
        est = StateEstimate(mean + offset, var, len(idx), self.step, t_now)
        forecast = None
        if cfg.horizon > 0:
            fm, fc = self._propagate(draws, means_t, covs_t, cfg.horizon)
            fmean, fvar = mixture_arrays(fm, fc)
            forecast = StateEstimate(fmean + offset, fvar, len(idx), self.step, t_now + cfg.horizon)
        return est, forecast

    def _propagate(self, draws, means, covs, dt):
        d = self.model.state_dim
        k = means.shape[1] // d
        out_m = np.empty_like(means)
        out_c = np.empty_like(covs)
        for i, v in enumerate(draws):
            Phi, Q, _, _ = transition_blocks(self.model, v, np.array([dt]))
            F = np.kron(np.eye(k), Phi[0])
            G = np.kron(np.eye(k), Q[0])
            out_m[i] = F @ means[i]
            out_c[i] = F @ covs[i] @ F.T + G
        return out_m, out_c

    def push(self, t, value):
        if self.halted:
            raise RuntimeError("filter is halted; call resume() first")
        t = float(t)
        value = np.atleast_1d(np.asarray(value, dtype=float))
        if not (math.isfinite(t) and np.all(np.isfinite(value))):
            raise DataError(f"non-finite observation at step {self.step + 1}")
        self.step += 1
        events = []
        if self._times:
            gap = t - self._times[-1]
            if gap == 0:
                raise DuplicateTimestamp(f"duplicate timestamp {t!r}", row=self.step)
            if gap < 0:
                raise NonMonotoneTime(f"timestamp decreases at step {self.step}")
            if gap >= self.config.cutoff:
                self.halted = True
                self._pending = (t, value)
                return [Halted(self.step, t, gap)]
        self._times.append(t)
        self._values.append(value)
        n = len(self._times)
        if self.surrogate is None:
            if n == self.config.L:
                window, _ = self._window()
                chain = self._learn(window)
                events.append(PhaseOneComplete(
                    self.step, self.surrogate.m, self.surrogate.C,
                    chain.coordinate_rates(0.5), chain.step_sizes,
                ))
            return events
        if n < 2:
            return events
        window, offset = self._window()
        est, forecast = self._estimate(window, offset)
        events.append(Estimate(self.step, t, est, self.last_alpha1, self.last_alpha2, forecast))
        if check_threshold(self.last_alpha2, self.config.threshold):
            self._learn(window)
            events.append(SurrogateRefreshed(self.step, t, self.last_alpha2))
        return events

    def resume(self):
        """Restart after a halt, keeping the surrogate and the observation
        that arrived after the gap as the first point of a new window."""
        if not self.halted:
            return
        self.halted = False
        self._times.clear()
        self._values.clear()
        t, value = self._pending
        self._pending = None
        self._times.append(t)
        self._values.append(value)


def _iter_source(source):
    if isinstance(source, ObservationSeries):
        return zip(source.times.tolist(), source.values)
    return iter(source)


def run_stream(model, config, source, priors=None, filt=None, surrogate=None, columns=()):
    """Drive a :class:`SlidingWindowFilter` over ``source`` and yield events.

    The stream ends at source exhaustion or after a :class:`Halted` event.
    To continue after a halt, call again with the same ``filt`` and the
    remaining source; the filter resumes with its last surrogate.
    """
    if filt is None:
        if isinstance(source, ObservationSeries) and not columns:
            columns = source.columns
        filt = SlidingWindowFilter(model, config, priors, surrogate, columns=columns)
    else:
        filt.resume()
    for t, value in _iter_source(source):
        for ev in filt.push(t, value):
            yield ev
            if isinstance(ev, Halted):
                return
