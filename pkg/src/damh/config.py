"""Run configuration: a flat ``key = value`` file whose keys mirror
:class:`RunConfig` fields one to one. Command-line flags override file
values. Unknown keys are rejected."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .errors import ConfigError
from .models import Flat, InverseGamma, LogFlat, constant_lags, inverse_gamma_lags, make_model
from .pipeline import DEFAULT_EPS
from .window import WindowConfig


@dataclass(frozen=True)
class RunConfig:
    model: str = "linear"
    # parameter values (simulate) or starting point (learn/filter)
    phi: float | None = None
    tau2: float | None = None
    sigma2: float | None = None
    gamma: float | None = None
    lambda2: float | None = None
    xi2: float | None = None
    # model options
    init_scale: float | None = None
    init_scale_position: float | None = None
    init_scale_velocity: float | None = None
    # priors, e.g. "ig:10,0.5", "logflat", "logflat:1e-3,1e3", "flat:-1,1"
    prior_phi: str | None = None
    prior_tau2: str | None = None
    prior_sigma2: str | None = None
    prior_gamma: str | None = None
    prior_lambda2: str | None = None
    prior_xi2: str | None = None
    # simulation
    n: int = 500
    lags: str | None = None
    axes: int = 1
    # samplers
    phase1_iters: int = 5000
    phase2_iters: int = 10000
    eps: float = DEFAULT_EPS
    alpha_target: float = 0.44
    b: float = 0.1
    method: str = "recursive"
    # sliding window
    window: int = 100
    threshold: float = 0.7
    cutoff: float = 300.0
    n_mixture: int = 100
    horizon: float = 0.0
    center_positions: bool = True
    # sweep / oracle / diagnose
    eps_grid: str = "0.5,1.0,1.5,2.0,2.5,3.0"
    iters: int = 2000
    trials: int = 50
    # io
    input: str | None = None
    surrogate: str | None = None
    chain: str | None = None
    truth: str | None = None
    out: str | None = None
    seed: int | None = None
    threads: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.axes < 1:
            raise ConfigError("axes must be at least 1")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.method not in ("recursive", "batch"):
            raise ConfigError("method must be 'recursive' or 'batch'")
        make_model(self.model)  # validates the name
        self.window_config()
        self.eps_values()
        self.priors()
        self.lag_sampler()

    # -- derived objects -------------------------------------------------

    def build_model(self):
        if self.model == "ou2d":
            return make_model(self.model, init_scale_position=self.init_scale_position,
                              init_scale_velocity=self.init_scale_velocity)
        return make_model(self.model, init_scale=self.init_scale)

    def theta_dict(self, required=True):
        model = make_model(self.model)
        vals = {k: getattr(self, k) for k in model.param_names}
        missing = [k for k, v in vals.items() if v is None]
        if missing:
            if required:
                raise ConfigError(f"missing parameter value(s): {', '.join(missing)}")
            return None
        return vals

    def priors(self):
        model = make_model(self.model)
        spec = model.default_priors()
        for f in fields(self):
            text = getattr(self, f.name)
            if not (f.name.startswith("prior_") and text):
                continue
            prior = parse_prior(text)  # syntax is checked even for unused keys
            name = f.name[len("prior_"):]
            if name in model.param_names:
                spec = spec.with_component(name, prior)
        return spec

    def window_config(self):
        return WindowConfig(
            L=self.window, threshold=self.threshold, cutoff=self.cutoff,
            phase1_iters=self.phase1_iters, phase2_iters=self.phase2_iters,
            n_mixture=self.n_mixture, eps=self.eps, horizon=self.horizon, seed=self.seed,
            center_positions=self.center_positions, threads=self.threads,
        )

    def eps_values(self):
        try:
            vals = [float(x) for x in str(self.eps_grid).split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"bad eps_grid {self.eps_grid!r}") from None
        if not vals or not all(v > 0 and math.isfinite(v) for v in vals):
            raise ConfigError("eps_grid must be a non-empty list of positive numbers")
        return vals

    def lag_sampler(self):
        if not self.lags:
            return None
        kind, _, args = self.lags.partition(":")
        try:
            nums = [float(a) for a in args.split(",")] if args else []
        except ValueError:
            raise ConfigError(f"bad lag sampler {self.lags!r}") from None
        if kind in ("const", "constant") and len(nums) == 1 and nums[0] > 0:
            return constant_lags(nums[0])
        if kind in ("ig", "inverse_gamma") and len(nums) == 2 and min(nums) > 0:
            return inverse_gamma_lags(*nums)
        raise ConfigError(f"bad lag sampler {self.lags!r}; use const:STEP or ig:SHAPE,SCALE")

    def resolved(self):
        """All fields as a plain dict, for output headers."""
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def merged(self, overrides):
        return from_mapping({**self.resolved(), **{k: v for k, v in overrides.items() if v is not None}})


def parse_prior(text):
    kind, _, args = text.strip().partition(":")
    try:
        nums = [float(a) for a in args.split(",")] if args else []
    except ValueError:
        raise ConfigError(f"bad prior {text!r}") from None
    kind = kind.lower()
    if kind == "ig" and len(nums) == 2:
        return InverseGamma(*nums)
    if kind == "logflat" and len(nums) in (0, 2):
        return LogFlat(*nums)
    if kind == "flat" and len(nums) == 2:
        return Flat(*nums)
    raise ConfigError(f"bad prior {text!r}; use ig:A,B, logflat[:LO,HI] or flat:LO,HI")


_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _coerce(name, raw):
    if raw is None or isinstance(raw, bool):
        return raw
    ftype = {f.name: f.type for f in fields(RunConfig)}[name]
    text = str(raw).strip()
    if text.lower() in ("", "none", "null") and "None" in ftype:
        return None
    try:
        if ftype.startswith("bool"):
            return _BOOL[text.lower()]
        if ftype.startswith("int"):
            return int(text)
        if ftype.startswith("float"):
            return float(text)
    except (KeyError, ValueError):
        raise ConfigError(f"bad value {raw!r} for {name}") from None
    return text


def from_mapping(mapping):
    names = {f.name: f for f in fields(RunConfig)}
    unknown = sorted(set(mapping) - set(names))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    kwargs = {k: _coerce(k, v) for k, v in mapping.items()}
    return RunConfig(**kwargs)


def parse_config_text(text):
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"config line {lineno}: expected key = value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def load_config(path, overrides=None):
    try:
        with open(path) as fh:
            mapping = parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    mapping.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return from_mapping(mapping)
