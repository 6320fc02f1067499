"""Nonparametric estimation of the censoring distribution.

The censoring survival curve is fitted by the Kaplan-Meier product-limit
estimator with the roles of failure and censoring swapped: a censored record
is the "event", a failure leaves the risk set. The matching cumulative
hazard comes from the Nelson-Aalen estimator. Both are returned as
right-continuous step functions.

Tie convention: when a failure and a censoring share a time, the failure is
removed from the risk set before the censoring is counted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ObservedSample
from .errors import AllTruncatedError, EmptySampleError, NegativeTimeError


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous piecewise-constant function on [0, inf)."""

    jump_times: np.ndarray
    values: np.ndarray
    initial_value: float = 1.0

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if jt.size != vals.size:
            raise ValueError("jump_times and values must have equal length")
        if jt.size and (np.any(jt <= 0) or np.any(np.diff(jt) <= 0)):
            raise ValueError("jump_times must be strictly increasing and positive")
        jt.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "initial_value", float(self.initial_value))
        # lookup table with the initial value prepended
        table = np.concatenate(([self.initial_value], vals))
        table.setflags(write=False)
        object.__setattr__(self, "_table", table)

    def _lookup(self, t, side: str):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0):
            raise NegativeTimeError("step functions are defined on [0, inf)")
        idx = np.searchsorted(self.jump_times, t_arr, side=side)
        out = self._table[idx]
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    def eval(self, t):
        """Value at `t` (right-continuous)."""
        return self._lookup(t, "right")

    def eval_left(self, t):
        """Left limit at `t`: the value just before any jump at `t`."""
        return self._lookup(t, "left")

    def jump_sizes(self) -> np.ndarray:
        return np.diff(np.concatenate(([self.initial_value], self.values)))

    def __call__(self, t):
        return self.eval(t)


def _grouped_counts(times, cens_flag, fail_flag):
    """Distinct times with censoring counts, failure counts and risk sets."""
    order = np.argsort(times, kind="stable")
    ts = times[order]
    cs = cens_flag[order].astype(float)
    fs = fail_flag[order].astype(float)
    distinct, start = np.unique(ts, return_index=True)
    bounds = np.append(start, ts.size)
    ccum = np.concatenate(([0.0], np.cumsum(cs)))
    fcum = np.concatenate(([0.0], np.cumsum(fs)))
    d_cens = ccum[bounds[1:]] - ccum[bounds[:-1]]
    d_fail = fcum[bounds[1:]] - fcum[bounds[:-1]]
    d_total = np.diff(bounds).astype(float)
    at_risk = ts.size - np.concatenate(([0.0], np.cumsum(d_total)[:-1]))
    return distinct, d_cens, d_fail, at_risk


def _censoring_fit_tables(sample: ObservedSample, truncation_quantile):
    """Per-time censoring-event tables, optionally truncated.

    With truncation, records with observed time beyond the empirical
    quantile `omega` contribute risk-set mass at `omega` but neither a
    censoring event nor a failure; genuine events at or below `omega` are
    untouched. Returns (times, d_cens, risk adjusted for tied failures).
    """
    t_obs = sample.time_obs
    if truncation_quantile is None or truncation_quantile == 1.0:
        t_fit = t_obs
        cens_fit = ~sample.event
        fail_fit = sample.event
    else:
        if not 0.0 < truncation_quantile <= 1.0:
            raise ValueError("truncation_quantile must lie in (0, 1]")
        omega = float(np.quantile(t_obs, truncation_quantile))
        if omega <= float(np.min(t_obs)):
            raise AllTruncatedError(
                f"truncation point {omega:g} equals the minimum observed time")
        keep = t_obs <= omega
        t_fit = np.where(keep, t_obs, omega)
        cens_fit = (~sample.event) & keep
        fail_fit = sample.event & keep
    times, d_cens, d_fail, at_risk = _grouped_counts(t_fit, cens_fit, fail_fit)
    return times, d_cens, at_risk - d_fail


def km_censoring_survival(sample: ObservedSample, truncation_quantile: float = 0.95) -> StepFunction:
    """Kaplan-Meier estimate of the censoring survival function P(C > t).

    Records with observed time beyond the `truncation_quantile` empirical
    quantile are administratively truncated there: they keep contributing
    risk-set mass at the truncation point but no censoring event, which keeps
    the fitted curve positive on the range used downstream. The original
    sample is never modified.
    """
    if sample.n == 0:
        raise EmptySampleError("cannot fit a censoring curve on an empty sample")
    times, d_cens, risk = _censoring_fit_tables(sample, truncation_quantile)
    jumps = d_cens > 0
    factors = 1.0 - d_cens[jumps] / risk[jumps]
    surv = np.cumprod(factors)
    fit = StepFunction(times[jumps], surv, initial_value=1.0)

    assert np.all(fit.values >= 0.0) and np.all(fit.values <= 1.0)
    assert np.all(np.diff(np.concatenate(([1.0], fit.values))) <= 0.0)
    return fit


def nelson_aalen_censoring(sample: ObservedSample,
                           truncation_quantile: float | None = None) -> StepFunction:
    """Nelson-Aalen estimate of the censoring cumulative hazard.

    By default nothing is truncated and the jumps sit exactly where the
    untruncated Kaplan-Meier censoring fit would have them. When a hazard is
    paired with a truncated survival fit (as in the doubly robust pipeline),
    pass the same `truncation_quantile` so the two estimate the identical
    censoring law and the martingale terms balance record by record.
    """
    if sample.n == 0:
        raise EmptySampleError("cannot fit a censoring hazard on an empty sample")
    times, d_cens, risk = _censoring_fit_tables(sample, truncation_quantile)
    jumps = d_cens > 0
    increments = d_cens[jumps] / risk[jumps]
    cumhaz = np.cumsum(increments)
    fit = StepFunction(times[jumps], cumhaz, initial_value=0.0)

    assert np.all(fit.values >= 0.0)
    assert np.all(np.diff(np.concatenate(([0.0], fit.values))) >= 0.0)
    return fit
