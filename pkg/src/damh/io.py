"""CSV and text artifacts.

Every file written here starts with ``#`` comment lines carrying the tool
version, the resolved configuration, the seed and the RNG algorithm.
Floats are written with ``repr`` so a written series reads back
bit-identically.
"""

from __future__ import annotations

import csv
import io
import math

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, DuplicateTimestamp, NonMonotoneTime, ParseError
from .samplers import SurrogatePosterior
from .series import ObservationSeries, TimeGrid

RNG_ID = "numpy.random.PCG64"

# file header order -> internal (position, velocity) pair order
_PAIR_LAYOUTS = {
    ("x", "y", "vx", "vy"): ("x", "vx", "y", "vy"),
}


def fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def header_lines(command, config=None, seed=None):
    lines = [f"# damh {__version__}", f"# command={command}", f"# rng={RNG_ID}", f"# seed={seed}"]
    for k, v in (config or {}).items():
        lines.append(f"# config.{k}={v}")
    return lines


def _write_header(fh, header):
    for line in header or ():
        fh.write(line if line.startswith("#") else f"# {line}")
        fh.write("\n")


# ---------------------------------------------------------------------------
# Observation series


def _file_columns(columns):
    for file_cols, internal in _PAIR_LAYOUTS.items():
        if tuple(columns) == internal:
            return list(file_cols), [internal.index(c) for c in file_cols]
    return list(columns), list(range(len(columns)))


def write_series(fh, series, header=None):
    """Write ``t`` plus value columns; ``fh`` is a path or text stream."""
    if isinstance(fh, str):
        with open(fh, "w", newline="") as f:
            return write_series(f, series, header)
    values = series.values.reshape(len(series), -1)
    columns = series.columns or tuple(f"y{j + 1}" for j in range(values.shape[1]))
    if values.shape[1] == 1 and not series.columns:
        columns = ("y",)
    names, order = _file_columns(columns)
    _write_header(fh, header)
    fh.write(",".join(["t", *names]) + "\n")
    for t, row in zip(series.times, values):
        fh.write(",".join([fmt(t), *(fmt(row[j]) for j in order)]) + "\n")


def series_to_text(series, header=None):
    buf = io.StringIO()
    write_series(buf, series, header)
    return buf.getvalue()


def parse_series(text, source="<text>"):
    """Parse CSV text with a ``t,...`` header into an :class:`ObservationSeries`.

    Row numbers in errors count data rows from 1 (header excluded).
    """
    meta = {}
    lines = []
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("#"):
            key, sep, value = stripped[1:].strip().partition("=")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        if stripped:
            lines.append(stripped)
    if not lines:
        raise ParseError(f"{source}: no header row")
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    if len(header) < 2 or header[0] != "t":
        raise ParseError(f"{source}: header must start with 't' followed by value columns", row=0)
    if len(set(header)) != len(header):
        raise ParseError(f"{source}: repeated column names", row=0)
    names = header[1:]
    times = []
    rows = []
    for r, cells in enumerate(reader, 1):
        if len(cells) != len(header):
            raise ParseError(f"{source}: expected {len(header)} fields, got {len(cells)}", row=r)
        parsed = []
        for name, cell in zip(header, cells):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{source}: not a number {cell!r}", row=r, column=name) from None
            if not math.isfinite(v):
                raise ParseError(f"{source}: non-finite value {cell!r}", row=r, column=name)
            parsed.append(v)
        times.append(parsed[0])
        rows.append(parsed[1:])
    if not rows:
        raise ParseError(f"{source}: no data rows")
    times = np.array(times)
    gaps = np.diff(times)
    bad = np.flatnonzero(gaps <= 0)
    if bad.size:
        r = int(bad[0]) + 2
        if gaps[bad[0]] == 0:
            raise DuplicateTimestamp(f"{source}: duplicate timestamp {times[r - 1]!r} at row {r}", row=r)
        raise NonMonotoneTime(f"{source}: timestamp decreases at row {r}")
    values = np.array(rows)
    layout = _PAIR_LAYOUTS.get(tuple(names))
    if layout is not None:
        values = values[:, [names.index(c) for c in layout]]
        names = list(layout)
    if values.shape[1] == 1:
        values = values[:, 0]
    return ObservationSeries(TimeGrid(times), values, tuple(names), meta.get("units", ""), meta)


def ingest_csv(path):
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    return parse_series(text, str(path))


def check_series_for_model(model, series):
    """Raise :class:`DataError` when the column layout does not fit ``model``."""
    width = 1 if series.values.ndim == 1 else series.values.shape[1]
    if model.state_dim == 2 and width % 2:
        raise DataError(
            f"model {model.name} needs (position, velocity) column pairs; got {width} column(s)"
        )


# ---------------------------------------------------------------------------
# Tables


def write_table(fh, columns, rows, header=None):
    _write_header(fh, header)
    fh.write(",".join(columns) + "\n")
    for row in rows:
        fh.write(",".join(fmt(v) if not isinstance(v, str) else v for v in row) + "\n")
    fh.flush()


def write_chain(fh, chain, names, header=None):
    cols = ["iter", *names, "log_target", "accepted"]
    extra = []
    if chain.coords is not None:
        cols.append("coord")
        extra.append(chain.coords)
    if chain.stage1 is not None:
        cols.append("stage1")
        extra.append(chain.stage1)
    rows = (
        [k + 1, *chain.samples[k], chain.log_target[k], bool(chain.accepted[k]), *(e[k] for e in extra)]
        for k in range(len(chain))
    )
    write_table(fh, cols, rows, header)


def read_chain(path):
    """Samples ``(n, dim)``, column names and header metadata from a chain CSV."""
    try:
        with open(path) as fh:
            return parse_chain(fh.read(), str(path))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def parse_chain(text, path="<text>"):
    meta = {}
    lines = []
    for ln in text.splitlines():
        if ln.startswith("#"):
            k, sep, v = ln[1:].strip().partition("=")
            if sep:
                meta[k.strip()] = v.strip()
        elif ln.strip():
            lines.append(ln)
    if not lines:
        raise DataError(f"{path}: empty chain file")
    cols = lines[0].strip().split(",")
    try:
        stop = cols.index("log_target")
    except ValueError:
        stop = len(cols)
    names = cols[1:stop] if cols[0] == "iter" else cols[:stop]
    first = 1 if cols[0] == "iter" else 0
    try:
        data = np.array([[float(x) for x in ln.strip().split(",")[first : first + len(names)]]
                         for ln in lines[1:]])
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return data.reshape(-1, len(names)), names, meta


# ---------------------------------------------------------------------------
# Filter output


def estimate_columns(columns, state_dim):
    cols = ["t", "step"]
    cols += [f"mean_{c}" for c in columns]
    cols += [f"var_{c}" for c in columns]
    if state_dim == 2:
        cols += [f"cov_{columns[j]}_{columns[j + 1]}" for j in range(0, len(columns), 2)]
    return cols + ["alpha1", "alpha2", "gap", "event"]


def estimate_row(event, n_cols, state_dim):
    blanks = [""] * n_cols
    kind = event.kind
    if kind == "estimate":
        est = event.estimate
        var = est.var
        vals = [*est.mean, *np.diag(var)]
        if state_dim == 2:
            vals += [var[j, j + 1] for j in range(0, var.shape[0], 2)]
        return [event.timestamp, event.step, *vals, event.alpha1, event.alpha2, None, kind]
    if kind == "halted":
        return [event.timestamp, event.step, *blanks, None, None, event.gap, kind]
    if kind == "refreshed":
        return [event.timestamp, event.step, *blanks, None, event.alpha2, None, kind]
    return None


# ---------------------------------------------------------------------------
# Surrogate artifact


def surrogate_to_text(surrogate, model_name, names, extra=None, header=None):
    lines = list(header or [])
    lines.append(f"model={model_name}")
    lines.append("names=" + ",".join(names))
    lines.append("m=" + ",".join(fmt(v) for v in surrogate.m))
    C = surrogate.C
    lower = [C[i, j] for i in range(C.shape[0]) for j in range(i + 1)]
    lines.append("C_lower=" + ",".join(fmt(v) for v in lower))
    for k, v in (extra or {}).items():
        if isinstance(v, (list, tuple, np.ndarray)):
            v = ",".join(fmt(x) for x in np.ravel(v))
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"


def parse_surrogate(text, source="<text>"):
    fields = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        k, sep, v = line.partition("=")
        if not sep:
            raise ParseError(f"{source}: expected key=value, got {line!r}")
        fields[k.strip()] = v.strip()
    for key in ("model", "names", "m", "C_lower"):
        if key not in fields:
            raise ConfigError(f"{source}: surrogate artifact lacks {key!r}")
    names = fields["names"].split(",")
    try:
        m = np.array([float(x) for x in fields["m"].split(",")])
        lower = [float(x) for x in fields["C_lower"].split(",")]
    except ValueError as exc:
        raise ParseError(f"{source}: {exc}") from None
    d = m.size
    if len(names) != d or len(lower) != d * (d + 1) // 2:
        raise ParseError(f"{source}: inconsistent surrogate dimensions")
    C = np.zeros((d, d))
    k = 0
    for i in range(d):
        for j in range(i + 1):
            C[i, j] = C[j, i] = lower[k]
            k += 1
    sur = SurrogatePosterior.from_moments(m, C)
    return sur, fields


def write_surrogate(path, surrogate, model_name, names, extra=None, header=None):
    with open(path, "w") as fh:
        fh.write(surrogate_to_text(surrogate, model_name, names, extra, header))


def read_surrogate(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read surrogate {path}: {exc}") from None
    return parse_surrogate(text, str(path))
