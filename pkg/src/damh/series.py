"""Time grids and observation records shared by every module."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DuplicateTimestamp, NonMonotoneTime


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing observation times (seconds)."""

    timestamps: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=float).reshape(-1)
        if not np.all(np.isfinite(ts)):
            raise DataError("timestamps must be finite")
        gaps = np.diff(ts)
        bad = np.flatnonzero(gaps <= 0)
        if bad.size:
            i = int(bad[0]) + 1
            if gaps[bad[0]] == 0:
                raise DuplicateTimestamp(f"duplicate timestamp {ts[i]!r} at index {i}", row=i)
            raise NonMonotoneTime(f"timestamp decreases at index {i}")
        object.__setattr__(self, "timestamps", ts)

    @classmethod
    def regular(cls, n, start=1.0, step=1.0):
        return cls(start + step * np.arange(n, dtype=float))

    @property
    def gaps(self):
        return np.diff(self.timestamps)

    def __len__(self):
        return self.timestamps.size


@dataclass
class ObservationSeries:
    """Observed values on a :class:`TimeGrid`.

    ``values`` is ``(n,)`` for a single 1-D axis or ``(n, m)`` otherwise.
    For the position-velocity model the columns come in (position, velocity)
    pairs, one pair per spatial axis.
    """

    grid: TimeGrid
    values: np.ndarray
    columns: tuple = ()
    units: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.grid, TimeGrid):
            self.grid = TimeGrid(self.grid)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim not in (1, 2):
            raise DataError("values must be 1-D or 2-D")
        if self.values.shape[0] != len(self.grid):
            raise DataError(
                f"{self.values.shape[0]} values for {len(self.grid)} timestamps"
            )
        if not np.all(np.isfinite(self.values)):
            raise DataError("observations must be finite")

    def __len__(self):
        return len(self.grid)

    @property
    def times(self):
        return self.grid.timestamps

    @property
    def gaps(self):
        return self.grid.gaps

    def axes(self, obs_dim):
        """Split the record into independent axes of width ``obs_dim``."""
        v = self.values
        if obs_dim == 1:
            if v.ndim == 1:
                return [v]
            return [v[:, j] for j in range(v.shape[1])]
        if v.ndim != 2 or v.shape[1] % obs_dim:
            raise DataError(f"expected columns in groups of {obs_dim}, got shape {v.shape}")
        return [v[:, j : j + obs_dim] for j in range(0, v.shape[1], obs_dim)]

    def n_axes(self, obs_dim):
        return len(self.axes(obs_dim))

    def window(self, start, stop):
        return ObservationSeries(
            TimeGrid(self.times[start:stop]), self.values[start:stop], self.columns, self.units
        )
