"""Command implementations shared by the HTTP service and the local CLI.

Each handler takes a resolved :class:`~damh.config.RunConfig` plus any
input documents as text and returns an :class:`Artifacts` bundle of text
outputs and a small JSON-friendly report. ``filter_lines`` is a generator
so callers can stream rows as they are produced.
"""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..config import RunConfig
from ..diagnostics import efficiency_report, step_size_sweep
from ..errors import ConfigError, NumericalError
from ..io import (
    check_series_for_model,
    estimate_columns,
    estimate_row,
    fmt,
    header_lines,
    parse_chain,
    parse_series,
    parse_surrogate,
    series_to_text,
    surrogate_to_text,
    write_chain,
    write_table,
)
from ..models import simulate as _simulate
from ..oracle import dense_conditionals, dense_log_likelihood
from ..pipeline import LogTarget, default_start, learn as _learn
from ..precision import log_posterior
from ..recursions import filter_moments, recursive_log_likelihood
from ..samplers import self_tuning_rwm
from ..series import ObservationSeries
from ..window import SlidingWindowFilter

ORACLE_TOL = {1: 1e-8, 2: 1e-6}


@dataclass
class Artifacts:
    files: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)
    exit_code: int = 0


def _header(command, cfg, **extra):
    lines = header_lines(command, cfg.resolved(), cfg.seed)
    lines += [f"# {k}={v}" for k, v in extra.items()]
    return lines


def _series(cfg, text):
    if text is None:
        raise ConfigError("an input series is required")
    series = parse_series(text, cfg.input or "<input>")
    check_series_for_model(cfg.build_model(), series)
    return series


def _start(cfg, model, series):
    vals = cfg.theta_dict(required=False)
    if vals is None:
        return default_start(model, series)
    return model.theta(vals).to_vector()


# ---------------------------------------------------------------------------


def simulate(cfg: RunConfig) -> Artifacts:
    model = cfg.build_model()
    theta = model.theta(cfg.theta_dict())
    grid, states, series = _simulate(model, theta, cfg.n, cfg.lag_sampler(), seed=cfg.seed,
                                     n_axes=cfg.axes)
    header = _header("simulate", cfg)
    truth = ObservationSeries(grid, states, series.columns)
    return Artifacts(
        {"out": series_to_text(series, header), "truth": series_to_text(truth, header)},
        {"n": len(series), "columns": list(series.columns)},
    )


def learn(cfg: RunConfig, series_text: str) -> Artifacts:
    model = cfg.build_model()
    series = _series(cfg, series_text)
    res = _learn(model, series, cfg.priors(), _start(cfg, model, series), cfg.phase1_iters,
                 cfg.phase2_iters, cfg.eps, cfg.seed, cfg.alpha_target, cfg.b, cfg.method)
    p1, p2 = res.phase1, res.phase2
    rates = p1.coordinate_rates(0.5)
    means = res.posterior_mean(model)
    extra = {
        "rates_last_half": rates,
        "step_sizes": p1.step_sizes,
        "theta_last": p2.samples[-1],
        "alpha1": fmt(p2.stage1_rate),
        "alpha2": fmt(p2.stage2_rate),
        "posterior_mean": [means[n] for n in model.param_names],
    }
    header = _header("learn", cfg)
    chain_buf = io.StringIO()
    write_chain(chain_buf, p2, model.param_names,
                header + [f"# wall_time={fmt(p2.wall_time)}", f"# eps={fmt(cfg.eps)}"])
    report = {
        "posterior_mean": {k: float(v) for k, v in means.items()},
        "phase1_rates": [float(r) for r in rates],
        "alpha1": p2.stage1_rate,
        "alpha2": p2.stage2_rate,
        "wall_time": p1.wall_time + p2.wall_time,
    }
    return Artifacts(
        {"out": surrogate_to_text(res.surrogate, model.name, model.param_names, extra, header),
         "chain": chain_buf.getvalue()},
        report,
    )


def _load_surrogate(cfg, model, text):
    if not text:
        return None, None
    sur, fields = parse_surrogate(text, cfg.surrogate or "<surrogate>")
    if fields["model"] != model.name:
        raise ConfigError(f"surrogate was learned for {fields['model']!r}, not {model.name!r}")
    theta = None
    if "theta_last" in fields:
        theta = np.array([float(x) for x in fields["theta_last"].split(",")])
    return sur, theta


def filter_lines(cfg: RunConfig, series_text: str, surrogate_text: str | None = None):
    """Yield the filter CSV line by line (header first)."""
    model = cfg.build_model()
    series = _series(cfg, series_text)
    sur, theta0 = _load_surrogate(cfg, model, surrogate_text)
    columns = series.columns or ("y",)
    filt = SlidingWindowFilter(model, cfg.window_config(), cfg.priors(), sur, theta0, columns)
    cols = estimate_columns(columns, model.state_dim)
    for line in _header("filter", cfg):
        yield line + "\n"
    yield ",".join(cols) + "\n"
    n_vals = len(cols) - 6
    values = series.values
    for t, v in zip(series.times.tolist(), values):
        for ev in filt.push(t, v):
            row = estimate_row(ev, n_vals, model.state_dim)
            if row is None:
                continue
            yield ",".join(x if isinstance(x, str) else fmt(x) for x in row) + "\n"
            if ev.kind == "halted":
                return


def filter_text(cfg, series_text, surrogate_text=None):
    return Artifacts({"out": "".join(filter_lines(cfg, series_text, surrogate_text))})


def sweep(cfg: RunConfig, series_text: str, surrogate_text: str | None = None) -> Artifacts:
    model = cfg.build_model()
    series = _series(cfg, series_text)
    target = LogTarget(model, series, cfg.priors(), cfg.method)
    sur, theta0 = _load_surrogate(cfg, model, surrogate_text)
    ss = np.random.SeedSequence(cfg.seed)
    s_learn, s_sweep = ss.spawn(2)
    if sur is None:
        chain, sur = self_tuning_rwm(target, _start(cfg, model, series), cfg.phase1_iters,
                                     cfg.alpha_target, cfg.b, seed=np.random.default_rng(s_learn))
        theta0 = chain.samples[-1]
    table = step_size_sweep(target, sur, cfg.eps_values(), cfg.iters, theta0=theta0,
                            seed=s_sweep, threads=cfg.threads)
    cols = ["eps", "alpha1", "alpha2", "eff", "eff_ut", "ess", "ess_ut", "time", "best"]
    rows = []
    for r in table.rows:
        flags = [n for n, e in (("ess", table.best_ess), ("ess_ut", table.best_ess_ut)) if e == r.eps]
        rows.append([r.eps, r.alpha1, r.alpha2, r.eff, r.eff_ut, r.ess, r.ess_ut, r.time,
                     "+".join(flags)])
    buf = io.StringIO()
    write_table(buf, cols, rows, _header("sweep", cfg))
    return Artifacts({"out": buf.getvalue()},
                     {"best_ess": table.best_ess, "best_ess_ut": table.best_ess_ut})


def _random_theta(model, rng):
    if model.name == "linear":
        return model.theta_cls(rng.uniform(-0.95, 0.95), rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0))
    if model.name == "ou1d":
        return model.theta_cls(rng.uniform(0.05, 2.0), rng.uniform(0.05, 2.0), rng.uniform(0.1, 2.0))
    return model.theta_cls(rng.uniform(0.005, 0.5), rng.uniform(0.1, 2.0), rng.uniform(0.001, 0.1),
                           rng.uniform(0.05, 1.0), rng.uniform(0.05, 1.0))


def oracle_trial(model, theta, n, rng, lag_sampler=None):
    """Max abs differences between the recursive, batch and dense paths."""
    _, _, series = _simulate(model, theta, n, lag_sampler, rng=rng)
    fm = filter_moments(model, theta, series)
    dc = dense_conditionals(model, theta, series)
    rec = recursive_log_likelihood(model, theta, series).value
    bat = log_posterior(model, theta, series).value
    den = dense_log_likelihood(model, theta, series)
    return {
        "forecast_mean": float(np.max(np.abs(fm.forecast_mean - dc.forecast_mean))),
        "forecast_cov": float(np.max(np.abs(fm.forecast_cov - dc.forecast_cov))),
        "filtered_mean": float(np.max(np.abs(fm.mean - dc.filtered_mean))),
        "filtered_cov": float(np.max(np.abs(fm.cov - dc.filtered_cov))),
        "loglik_recursive": rec,
        "loglik_batch": bat,
        "loglik_dense": den,
    }


def oracle(cfg: RunConfig) -> Artifacts:
    model = cfg.build_model()
    rng = np.random.default_rng(cfg.seed)
    tol = ORACLE_TOL[model.state_dim]
    rows = []
    worst = 0.0
    loglik_gap = []
    t0 = time.perf_counter()
    for k in range(cfg.trials):
        theta = _random_theta(model, rng)
        d = oracle_trial(model, theta, cfg.n, rng, cfg.lag_sampler())
        moment = max(d["forecast_mean"], d["forecast_cov"], d["filtered_mean"], d["filtered_cov"])
        worst = max(worst, moment)
        loglik_gap.append(d["loglik_batch"] - d["loglik_recursive"])
        rows.append([k + 1, *theta.as_tuple(), d["forecast_mean"], d["forecast_cov"],
                     d["filtered_mean"], d["filtered_cov"], d["loglik_recursive"],
                     d["loglik_batch"], d["loglik_dense"]])
    spread = float(np.max(loglik_gap) - np.min(loglik_gap)) if loglik_gap else 0.0
    ok = worst < tol and spread < 1e-8
    cols = ["trial", *model.param_names, "forecast_mean", "forecast_cov", "filtered_mean",
            "filtered_cov", "loglik_recursive", "loglik_batch", "loglik_dense"]
    buf = io.StringIO()
    write_table(buf, cols, rows, _header(
        "oracle", cfg, max_moment_diff=fmt(worst), tolerance=fmt(tol),
        loglik_constant_spread=fmt(spread), passed=ok))
    report = {"max_moment_diff": worst, "tolerance": tol, "loglik_constant_spread": spread,
              "passed": ok, "seconds": time.perf_counter() - t0}
    return Artifacts({"out": buf.getvalue()}, report, 0 if ok else NumericalError.exit_code)


def diagnose(cfg: RunConfig, chain_text: str) -> Artifacts:
    if chain_text is None:
        raise ConfigError("a chain CSV is required")
    samples, names, meta = parse_chain(chain_text, cfg.chain or "<chain>")
    wall = float(meta.get("wall_time", "nan"))
    if not math.isfinite(wall) or wall <= 0:
        raise ConfigError("chain file lacks a positive '# wall_time=' header")
    rep = efficiency_report(samples, wall, constant_as_n=True)
    rows = [[n, rep.iat[j], rep.ess[j], rep.eff[j], rep.k_cut[j]] for j, n in enumerate(names)]
    rows.append(["mean", float(np.mean(rep.iat)), rep.mean_ess, rep.mean_eff, ""])
    buf = io.StringIO()
    write_table(buf, ["param", "iat", "ess", "eff", "k_cut"], rows, _header(
        "diagnose", cfg, wall_time=fmt(wall), eff_ut=fmt(rep.eff_ut), ess_ut=fmt(rep.ess_ut),
        n=rep.n))
    report = {"n": rep.n, "eff": rep.mean_eff, "ess": rep.mean_ess, "eff_ut": rep.eff_ut,
              "ess_ut": rep.ess_ut, "wall_time": wall}
    return Artifacts({"out": buf.getvalue()}, report)
