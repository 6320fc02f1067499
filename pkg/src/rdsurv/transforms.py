"""Censoring unbiased pseudo-responses.

Two transformations of a right-censored record into a pseudo-response whose
conditional mean given the forcing value matches that of log failure time:

* IPCW: observed failures weighted by the inverse censoring survival,
  censored records contribute zero;
* doubly robust: the IPCW term plus a censoring-martingale augmentation
  driven by the fitted conditional expectation of log failure time. The
  augmentation uses the jumps of the censoring cumulative hazard, with the
  censoring survival always evaluated as a left limit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .condexp import CondExpModel, q_y_batch
from .data import ObservedRecord, ObservedSample
from .errors import ZeroDenominatorError
from .survival import StepFunction

QFunction = Union[CondExpModel, Callable[[np.ndarray, np.ndarray], np.ndarray]]

_FLAT_CHUNK = 2_000_000


@dataclass(frozen=True)
class TransformedSample:
    pseudo_y: np.ndarray
    forcing: np.ndarray
    treated: np.ndarray
    method: str

    def __post_init__(self):
        py = np.asarray(self.pseudo_y, dtype=float)
        forcing = np.asarray(self.forcing, dtype=float)
        treated = np.asarray(self.treated, dtype=bool)
        if not (py.size == forcing.size == treated.size):
            raise ValueError("transformed sample columns must have equal length")
        if not np.all(np.isfinite(py)):
            raise ValueError("pseudo-responses must be finite")
        for name, col in (("pseudo_y", py), ("forcing", forcing), ("treated", treated)):
            col.setflags(write=False)
            object.__setattr__(self, name, col)

    @property
    def n(self) -> int:
        return self.pseudo_y.size


def _q_fn(model: QFunction):
    if isinstance(model, CondExpModel):
        return lambda u, w: q_y_batch(model, u, w)
    if callable(model):
        return lambda u, w: np.asarray(model(np.asarray(u, dtype=float),
                                             np.asarray(w, dtype=float)), dtype=float)
    raise TypeError("model must be a CondExpModel or a callable q(u, w)")


def _pseudo_values(time_obs, event, forcing, method, g_hat, lambda_g, model,
                   omega=None):
    if omega is not None:
        # administrative truncation at the horizon omega: the estimable tail
        # ends there. IPCW has no imputation channel, so records observed
        # beyond omega count as events at omega (value capped at log omega);
        # the doubly robust transform instead marks them censored at omega
        # and lets the working model impute the remaining tail.
        over = time_obs > omega
        time_obs = np.where(over, omega, time_obs)
        event = (event | over) if method == "ipcw" else (event & ~over)
    g_left = g_hat.eval_left(time_obs)
    bad = event & (g_left <= 0.0)
    if np.any(bad):
        raise ZeroDenominatorError(
            "censoring survival has left limit zero at an event time",
            index=int(np.flatnonzero(bad)[0]))
    with np.errstate(divide="ignore", invalid="ignore"):
        ipcw = np.where(event, np.log(time_obs) / g_left, 0.0)
    if method == "ipcw":
        return ipcw

    qfn = _q_fn(model)
    censored = ~event
    bad = censored & (g_left <= 0.0)
    if np.any(bad):
        raise ZeroDenominatorError(
            "censoring survival has left limit zero at a censoring time",
            index=int(np.flatnonzero(bad)[0]))
    cens_term = np.zeros_like(ipcw)
    if np.any(censored):
        cens_term[censored] = (
            qfn(time_obs[censored], forcing[censored]) / g_left[censored])

    jump_times = lambda_g.jump_times
    pseudo = ipcw + cens_term
    if jump_times.size == 0:
        return pseudo
    dlam = lambda_g.jump_sizes()
    g_left_jumps = g_hat.eval_left(jump_times)
    if np.any((dlam > 0.0) & (g_left_jumps <= 0.0)):
        raise ZeroDenominatorError(
            "censoring survival has left limit zero at a hazard jump")
    ratio = dlam / g_left_jumps

    # martingale compensator: jumps at s <= observed time, inclusive
    counts = np.searchsorted(jump_times, time_obs, side="right")
    mart = np.zeros_like(ipcw)
    active = np.flatnonzero(counts > 0)
    pos = 0
    while pos < active.size:
        block, total = [], 0
        while pos < active.size and (not block or total + counts[active[pos]] <= _FLAT_CHUNK):
            block.append(active[pos])
            total += counts[active[pos]]
            pos += 1
        idx = np.array(block)
        reps = counts[idx]
        flat_u = np.concatenate([jump_times[:c] for c in reps])
        flat_w = np.repeat(forcing[idx], reps)
        flat_ratio = np.concatenate([ratio[:c] for c in reps])
        qvals = qfn(flat_u, flat_w)
        terms = qvals * flat_ratio
        offsets = np.concatenate(([0], np.cumsum(reps)))
        for k, i in enumerate(idx):
            mart[i] = np.sum(terms[offsets[k]:offsets[k + 1]])
    return pseudo - mart


def transform_all(sample: ObservedSample, method: str, g_hat: StepFunction,
                  lambda_g: StepFunction | None = None,
                  model: QFunction | None = None,
                  omega: float | None = None) -> TransformedSample:
    """Pseudo-responses for every record, preserving sample order.

    `omega` is the optional truncation horizon; it must match the horizon
    used when fitting `g_hat` (and `lambda_g`).
    """
    if method not in ("ipcw", "dr"):
        raise ValueError(f"unknown transform method {method!r}")
    if method == "dr" and (lambda_g is None or model is None):
        raise ValueError("doubly robust transform needs lambda_g and a model")
    pseudo = _pseudo_values(sample.time_obs, sample.event, sample.forcing,
                            method, g_hat, lambda_g, model, omega)
    return TransformedSample(pseudo, sample.forcing, sample.treated, method)


def transform_ipcw(record: ObservedRecord, g_hat: StepFunction,
                   omega: float | None = None) -> float:
    """IPCW pseudo-response of one record."""
    out = _pseudo_values(np.array([record.time_obs]), np.array([record.event]),
                         np.array([record.forcing]), "ipcw", g_hat, None, None,
                         omega)
    return float(out[0])


def transform_dr(record: ObservedRecord, g_hat: StepFunction,
                 lambda_g: StepFunction, model: QFunction,
                 omega: float | None = None) -> float:
    """Doubly robust pseudo-response of one record."""
    out = _pseudo_values(np.array([record.time_obs]), np.array([record.event]),
                         np.array([record.forcing]), "dr", g_hat, lambda_g, model,
                         omega)
    return float(out[0])
