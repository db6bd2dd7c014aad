import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from damh.config import RunConfig, from_mapping, load_config, parse_config_text, parse_prior
from damh.errors import ConfigError, DataError, DuplicateTimestamp, NonMonotoneTime, ParseError
from damh.io import (
    RNG_ID,
    header_lines,
    ingest_csv,
    parse_chain,
    parse_series,
    parse_surrogate,
    series_to_text,
    surrogate_to_text,
    write_chain,
)
from damh.models import InverseGamma, LogFlat, OU2DTheta, constant_lags, make_model, simulate
from damh.samplers import SurrogatePosterior, self_tuning_rwm
from damh.series import ObservationSeries, TimeGrid

from conftest import OU2D_ROW


def test_three_rows(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("t,y\n0,1.5\n1,2.0\n2.5,-1\n")
    s = ingest_csv(p)
    assert len(s) == 3 and np.allclose(s.gaps, [1.0, 1.5])


def test_duplicate_timestamp_row():
    with pytest.raises(DuplicateTimestamp) as ei:
        parse_series("# note\nt,y\n0,1\n1,2\n1,3\n2,4\n")
    assert ei.value.row == 3


def test_decreasing_time():
    with pytest.raises(NonMonotoneTime):
        parse_series("t,y\n0,1\n2,2\n1,3\n")


@pytest.mark.parametrize("text,row,col", [
    ("t,y\n0,1\n1,abc\n", 2, "y"),
    ("t,y\n0,1\n1,nan\n", 2, "y"),
    ("t,y\n0,1,2\n", 1, None),
])
def test_parse_errors_locate_cell(text, row, col):
    with pytest.raises(ParseError) as ei:
        parse_series(text)
    assert ei.value.row == row and ei.value.column == col


def test_bad_header():
    with pytest.raises(ParseError):
        parse_series("time,y\n0,1\n")
    with pytest.raises(ParseError):
        parse_series("")


def test_simulated_series_round_trip_bit_identical():
    m = make_model("linear")
    _, _, s = simulate(m, dict(phi=0.9, tau2=0.5, sigma2=1.0), 500, seed=1)
    text = series_to_text(s, header_lines("simulate", {"model": "linear"}, 1))
    back = parse_series(text)
    assert np.array_equal(back.values, s.values) and np.array_equal(back.times, s.times)
    assert back.meta["rng"] == RNG_ID and back.meta["seed"] == "1"


def test_two_axis_file_layout():
    m = make_model("ou2d")
    _, _, s = simulate(m, OU2D_ROW, 30, constant_lags(1.0), seed=2, n_axes=2)
    text = series_to_text(s)
    assert text.splitlines()[0] == "t,x,y,vx,vy"
    back = parse_series(text)
    assert back.columns == ("x", "vx", "y", "vy")
    assert np.array_equal(back.values, s.values)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40),
       st.floats(1e-3, 100.0))
def test_round_trip_property(vals, step):
    s = ObservationSeries(TimeGrid(np.arange(len(vals)) * step + 0.5), np.array(vals))
    back = parse_series(series_to_text(s))
    assert np.array_equal(back.values, s.values) and np.array_equal(back.times, s.times)


def test_surrogate_round_trip():
    C = np.array([[2.0, 0.3], [0.3, 0.5]])
    sur = SurrogatePosterior.from_moments([1.0, -2.0], C)
    text = surrogate_to_text(sur, "linear", ("phi", "tau2"), {"alpha2": 0.8, "step_sizes": [0.1, 0.2]},
                             header_lines("learn"))
    back, fields = parse_surrogate(text)
    assert np.array_equal(back.m, sur.m) and np.array_equal(back.C, sur.C)
    assert fields["model"] == "linear" and fields["step_sizes"] == "0.1,0.2"
    with pytest.raises(ConfigError):
        parse_surrogate("model=linear\n")
    with pytest.raises(ParseError):
        parse_surrogate("model=linear\nnames=a,b\nm=1,2\nC_lower=1,0\n")


def test_chain_round_trip():
    chain, _ = self_tuning_rwm(lambda x: -0.5 * float(x @ x), np.zeros(2), 200, seed=0, fit=False)
    buf = io.StringIO()
    write_chain(buf, chain, ("a", "b"), header_lines("learn") + ["# wall_time=1.5"])
    samples, names, meta = parse_chain(buf.getvalue())
    assert names == ["a", "b"] and meta["wall_time"] == "1.5"
    assert np.array_equal(samples, chain.samples)


def test_header_has_version_config_seed_rng():
    lines = header_lines("filter", {"window": 100}, 7)
    assert lines[0].startswith("# damh ")
    assert "# rng=numpy.random.PCG64" in lines and "# seed=7" in lines and "# config.window=100" in lines


# -- config ----------------------------------------------------------------


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        from_mapping({"model": "linear", "windw": 5})


def test_file_then_flags(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nmodel = ou2d\nwindow = 50   # trailing\nthreshold = 0.6\nphase1-iters = 100\n")
    cfg = load_config(p, {"threshold": "0.5"})
    assert cfg.model == "ou2d" and cfg.window == 50 and cfg.threshold == 0.5 and cfg.phase1_iters == 100
    assert cfg.window_config().L == 50


@pytest.mark.parametrize("mapping", [
    {"model": "nope"}, {"n": "0"}, {"threshold": "1.5"}, {"eps_grid": "1,-2"},
    {"prior_gamma": "ig:1"}, {"lags": "weird:1"}, {"method": "dense"}, {"window": "abc"},
    {"center_positions": "maybe"},
])
def test_invalid_values(mapping):
    with pytest.raises(ConfigError):
        from_mapping(mapping)


def test_config_line_without_equals():
    with pytest.raises(ConfigError):
        parse_config_text("model linear\n")


def test_prior_parsing_and_theta():
    assert parse_prior("ig:10,0.5") == InverseGamma(10.0, 0.5)
    assert parse_prior("logflat") == LogFlat()
    cfg = from_mapping({"model": "ou2d", "prior_gamma": "ig:3,1"})
    assert cfg.priors()["gamma"] == InverseGamma(3.0, 1.0)
    assert cfg.theta_dict(required=False) is None
    with pytest.raises(ConfigError):
        cfg.theta_dict()
    full = from_mapping({"model": "ou2d", **{k: str(v) for k, v in OU2D_ROW.items()}})
    assert full.build_model().theta(full.theta_dict()) == OU2DTheta(**OU2D_ROW)


def test_resolved_covers_every_field():
    from dataclasses import fields

    assert set(RunConfig().resolved()) == {f.name for f in fields(RunConfig)}


def test_model_data_mismatch():
    from damh.io import check_series_for_model

    s = parse_series("t,y\n0,1\n1,2\n")
    with pytest.raises(DataError):
        check_series_for_model(make_model("ou2d"), s)
