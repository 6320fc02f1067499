"""Observed-sample containers.

A sample holds one row per subject: the observed time (failure or censoring,
whichever came first), the event indicator, the forcing-variable value and
the treatment flag. Columns are stored as immutable numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import EmptySampleError


class ObservedRecord(NamedTuple):
    time_obs: float
    event: bool
    forcing: float
    treated: bool


@dataclass(frozen=True)
class ObservedSample:
    time_obs: np.ndarray
    event: np.ndarray
    forcing: np.ndarray
    treated: np.ndarray

    def __post_init__(self):
        time_obs = np.atleast_1d(np.asarray(self.time_obs, dtype=float))
        event = np.atleast_1d(np.asarray(self.event, dtype=bool))
        forcing = np.atleast_1d(np.asarray(self.forcing, dtype=float))
        treated = np.atleast_1d(np.asarray(self.treated, dtype=bool))
        n = time_obs.size
        if n == 0:
            raise EmptySampleError("sample contains no records")
        if not (event.size == forcing.size == treated.size == n):
            raise ValueError("sample columns must have equal length")
        if not np.all(time_obs > 0):
            raise ValueError("observed times must be strictly positive")
        if not np.all(np.isfinite(forcing)):
            raise ValueError("forcing values must be finite")
        for name, col in (("time_obs", time_obs), ("event", event),
                          ("forcing", forcing), ("treated", treated)):
            col.setflags(write=False)
            object.__setattr__(self, name, col)

    @property
    def n(self) -> int:
        return self.time_obs.size

    def __len__(self) -> int:
        return self.n

    def record(self, i: int) -> ObservedRecord:
        return ObservedRecord(float(self.time_obs[i]), bool(self.event[i]),
                              float(self.forcing[i]), bool(self.treated[i]))

    def __iter__(self) -> Iterator[ObservedRecord]:
        return (self.record(i) for i in range(self.n))

    def take(self, indices) -> "ObservedSample":
        """Row subset / resample (used by the bootstrap)."""
        idx = np.asarray(indices, dtype=int)
        return ObservedSample(self.time_obs[idx], self.event[idx],
                              self.forcing[idx], self.treated[idx])

    @classmethod
    def from_records(cls, records: Iterable[ObservedRecord]) -> "ObservedSample":
        rows = list(records)
        if not rows:
            raise EmptySampleError("sample contains no records")
        return cls(np.array([r.time_obs for r in rows]),
                   np.array([r.event for r in rows]),
                   np.array([r.forcing for r in rows]),
                   np.array([r.treated for r in rows]))

    @property
    def censoring_rate(self) -> float:
        return float(np.mean(~self.event))
