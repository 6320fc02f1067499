"""Working failure-time models and the conditional expectation of log time.

Three model families are supported for E(log T | T >= u, W = w):

* lognormal AFT: log T = a + b*W + scale*N(0,1), censored maximum likelihood,
  conditional mean in closed form through the normal hazard (Mills ratio);
* log-logistic AFT: log T = a + b*W + scale*Logistic(0,1), conditional mean
  by adaptive numeric quadrature;
* Cox proportional hazards on W with a Breslow baseline, conditional mean as
  a Riemann-Stieltjes sum over the implied survival jumps; residual mass
  beyond the last event time is assigned to the maximum observed time, which
  makes the implied distribution proper and yields the standard fallback
  (return log of the maximum observed time once u passes every event time).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import optimize, special
from scipy.stats import norm

from .data import ObservedSample
from .errors import (MonotoneLikelihoodWarning, NegativeUError, NoEventsError,
                     NonConvergenceError, QuadratureFailureError)
from .survival import StepFunction

COX_COEF_CAP = 20.0
_GRAD_TOL = 1e-8
_STEP_TOL = 1e-10
_MAX_ITER = 200


@dataclass(frozen=True)
class AftFit:
    distribution: str  # "lognormal" | "loglogistic"
    intercept: float
    slope: float
    scale: float
    loglik: float


@dataclass(frozen=True)
class CoxFit:
    coefficient: float
    baseline_cumhaz: StepFunction
    event_times: np.ndarray
    converged: bool = True


@dataclass(frozen=True)
class CondExpModel:
    """A fitted failure-time model plus the sample maximum of observed time."""

    fit: Union[AftFit, CoxFit]
    max_obs_time: float

    @property
    def kind(self) -> str:
        if isinstance(self.fit, CoxFit):
            return "cox"
        return self.fit.distribution


# -- AFT fitting ---------------------------------------------------------------

def _aft_mean_negloglik(theta, y, w, event, distribution):
    """Mean negative log-likelihood of the observed times and its gradient.

    `y` is log observed time; the event density includes the 1/t Jacobian
    (constant in theta, kept so `loglik` is the likelihood of the times).
    """
    b0, b1, log_scale = theta
    scale = np.exp(log_scale)
    z = (y - b0 - b1 * w) / scale
    if distribution == "lognormal":
        ll_event = norm.logpdf(z) - log_scale - y
        ll_cens = norm.logsf(z)
        dz_event = -z
        dz_cens = -np.exp(norm.logpdf(z) - norm.logsf(z))
    else:  # loglogistic: standard logistic errors
        sp = np.logaddexp(0.0, z)
        sig = np.exp(z - sp)  # exp(z)/(1+exp(z)), stable
        ll_event = z - 2.0 * sp - log_scale - y
        ll_cens = -sp
        dz_event = 1.0 - 2.0 * sig
        dz_cens = -sig
    n = y.size
    ll = np.where(event, ll_event, ll_cens)
    dz = np.where(event, dz_event, dz_cens)
    # d(mean ll)/d(b0,b1) via dz * dz/dparam; extra -1 on log_scale for events
    g0 = np.sum(dz * (-1.0 / scale)) / n
    g1 = np.sum(dz * (-w / scale)) / n
    g2 = (np.sum(dz * (-z)) - np.sum(event)) / n
    return -np.mean(ll), -np.array([g0, g1, g2])


def _aft_start(y, w, event):
    ev = event if np.any(event) else np.ones_like(event)
    ye, we = y[ev], w[ev]
    if ye.size >= 2 and np.ptp(we) > 0:
        slope, intercept = np.polyfit(we, ye, 1)
        resid = ye - intercept - slope * we
        scale0 = max(float(np.std(resid)), 1e-3)
    else:
        intercept, slope = float(np.mean(ye)), 0.0
        scale0 = max(float(np.std(ye)), 1e-3)
    return np.array([intercept, slope, np.log(scale0)])


def _newton_polish(theta, args, max_iter=25):
    """Newton steps on the mean negative log-likelihood (numeric Hessian).

    Returns (theta, gradient sup-norm, last step sup-norm).
    """
    nll, grad = _aft_mean_negloglik(theta, *args)
    step_norm = np.inf
    for _ in range(max_iter):
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm < 1e-11:
            break
        hess = np.empty((3, 3))
        eps = 1e-6 * np.maximum(1.0, np.abs(theta))
        for j in range(3):
            shift = np.zeros(3)
            shift[j] = eps[j]
            _, gp = _aft_mean_negloglik(theta + shift, *args)
            _, gm = _aft_mean_negloglik(theta - shift, *args)
            hess[:, j] = (gp - gm) / (2.0 * eps[j])
        hess = (hess + hess.T) / 2.0
        try:
            delta = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        scale_back = 1.0
        while scale_back > 1e-8:
            cand = theta - scale_back * delta
            cand_nll, cand_grad = _aft_mean_negloglik(cand, *args)
            if np.isfinite(cand_nll) and cand_nll <= nll + 1e-15:
                break
            scale_back /= 2.0
        step = scale_back * delta
        step_norm = float(np.max(np.abs(step)))
        theta, nll, grad = cand, cand_nll, cand_grad
        if step_norm < _STEP_TOL:
            break
    return theta, float(np.max(np.abs(grad))), step_norm


def fit_aft(sample: ObservedSample, distribution: str = "lognormal") -> AftFit:
    """Censored maximum likelihood for a one-covariate AFT model.

    Converged when the gradient sup-norm of the mean log-likelihood drops
    below 1e-8 or the parameter step below 1e-10, within 200 iterations.
    """
    if distribution not in ("lognormal", "loglogistic"):
        raise ValueError(f"unknown AFT distribution {distribution!r}")
    if sample.n < 3:
        raise ValueError("AFT fitting needs at least 3 records")
    if not np.any(sample.event):
        raise NoEventsError("AFT fitting needs at least one observed failure")
    y = np.log(sample.time_obs)
    w = sample.forcing
    event = sample.event
    args = (y, w, event, distribution)

    theta0 = _aft_start(y, w, event)
    res = optimize.minimize(
        _aft_mean_negloglik, theta0, args=args, jac=True, method="BFGS",
        options={"gtol": 1e-10, "maxiter": _MAX_ITER})
    theta, grad_norm, step_norm = _newton_polish(res.x, args)
    scale = float(np.exp(theta[2]))
    if scale < 1e-7:
        raise NonConvergenceError(
            "scale estimate collapsed to the zero boundary (degenerate data)",
            gradient_norm=grad_norm, at_boundary=True)
    if grad_norm >= _GRAD_TOL and step_norm >= _STEP_TOL:
        raise NonConvergenceError(
            f"AFT optimizer stalled (gradient sup-norm {grad_norm:.3e})",
            gradient_norm=grad_norm)
    mean_nll, _ = _aft_mean_negloglik(theta, *args)
    return AftFit(distribution, float(theta[0]), float(theta[1]), scale,
                  loglik=float(-mean_nll * sample.n))


# -- Cox fitting ---------------------------------------------------------------

def _cox_suffstats(beta, t_sorted, e_sorted, w_sorted):
    """Log partial likelihood, score and information for one covariate."""
    expw = np.exp(beta * w_sorted)
    s0 = np.cumsum(expw[::-1])[::-1]
    s1 = np.cumsum((w_sorted * expw)[::-1])[::-1]
    s2 = np.cumsum((w_sorted ** 2 * expw)[::-1])[::-1]
    # Breslow ties: every event at time t uses the full risk set {T >= t}
    first_at_time = np.concatenate(([True], t_sorted[1:] != t_sorted[:-1]))
    risk_start = np.maximum.accumulate(np.where(first_at_time, np.arange(t_sorted.size), 0))
    ev = e_sorted
    s0e, s1e, s2e = s0[risk_start][ev], s1[risk_start][ev], s2[risk_start][ev]
    loglik = float(np.sum(beta * w_sorted[ev] - np.log(s0e)))
    score = float(np.sum(w_sorted[ev] - s1e / s0e))
    info = float(np.sum(s2e / s0e - (s1e / s0e) ** 2))
    return loglik, score, info


def fit_cox(sample: ObservedSample) -> CoxFit:
    """Newton-Raphson fit of the Cox partial likelihood on the forcing value.

    Breslow handling of ties, Breslow baseline cumulative hazard. When the
    partial likelihood is monotone the coefficient is capped at +/-20 and a
    MonotoneLikelihoodWarning is emitted.
    """
    if sample.n < 3:
        raise ValueError("Cox fitting needs at least 3 records")
    if not np.any(sample.event):
        raise NoEventsError("Cox fitting needs at least one observed failure")
    if np.ptp(sample.forcing) == 0:
        raise ValueError("Cox fitting needs a non-constant forcing variable")

    order = np.argsort(sample.time_obs, kind="stable")
    t_sorted = sample.time_obs[order]
    e_sorted = sample.event[order]
    w_sorted = sample.forcing[order]

    beta, converged = 0.0, False
    loglik, score, info = _cox_suffstats(beta, t_sorted, e_sorted, w_sorted)
    for _ in range(_MAX_ITER):
        if abs(score) < 1e-9:
            converged = True
            break
        step = score / info if info > 0 else np.sign(score) * 1.0
        new_beta = beta + step
        new_loglik, new_score, new_info = _cox_suffstats(new_beta, t_sorted, e_sorted, w_sorted)
        halvings = 0
        while (not np.isfinite(new_loglik) or new_loglik < loglik) and halvings < 30:
            step /= 2.0
            new_beta = beta + step
            new_loglik, new_score, new_info = _cox_suffstats(new_beta, t_sorted, e_sorted, w_sorted)
            halvings += 1
        if abs(new_beta) > COX_COEF_CAP:
            beta = float(np.clip(new_beta, -COX_COEF_CAP, COX_COEF_CAP))
            warnings.warn("monotone partial likelihood; coefficient capped at "
                          f"{beta:+g}", MonotoneLikelihoodWarning)
            break
        if abs(new_beta - beta) < 1e-12:
            beta, converged = new_beta, True
            break
        beta, loglik, score, info = new_beta, new_loglik, new_score, new_info
    else:
        raise NonConvergenceError(
            f"Cox Newton-Raphson did not converge (score {score:.3e})",
            gradient_norm=abs(score))

    # Breslow baseline hazard at the final coefficient
    expw = np.exp(beta * w_sorted)
    s0 = np.cumsum(expw[::-1])[::-1]
    ev_times, start = np.unique(t_sorted[e_sorted], return_index=True)
    ev_all_idx = np.searchsorted(t_sorted, ev_times, side="left")
    d_events = np.diff(np.append(start, t_sorted[e_sorted].size))
    increments = d_events / s0[ev_all_idx]
    baseline = StepFunction(ev_times, np.cumsum(increments), initial_value=0.0)
    return CoxFit(float(beta), baseline, ev_times, converged=converged)


def fit_cond_exp(sample: ObservedSample, method: str) -> CondExpModel:
    """Fit the requested working model and wrap it for conditional expectations."""
    if method == "cox":
        fit = fit_cox(sample)
    else:
        fit = fit_aft(sample, method)
    return CondExpModel(fit=fit, max_obs_time=float(np.max(sample.time_obs)))


# -- conditional expectation ----------------------------------------------------

_GL_NODES, _GL_WEIGHTS = leggauss(16)
_LOGISTIC_TAIL = float(np.log((1.0 - 1e-10) / 1e-10))  # 1 - 1e-10 quantile


def _logistic_pdf(z):
    a = np.exp(-np.abs(z))
    return a / (1.0 + a) ** 2


def _logistic_sf(z):
    return np.exp(-np.logaddexp(0.0, z))


def _logistic_mean_excess_quad(a: np.ndarray, rel_tol: float = 1e-8,
                               max_refine: int = 8) -> np.ndarray:
    """E(E | E >= a) for a standard logistic variable, by adaptive quadrature.

    Composite Gauss-Legendre panels on [a, upper] with per-element panel
    doubling until successive refinements agree to `rel_tol` relatively.
    """
    a = np.asarray(a, dtype=float)
    lo = np.maximum(a, -45.0)  # mass below -45 is ~1e-18, irrelevant at 1e-8
    hi = np.maximum(_LOGISTIC_TAIL, lo + 45.0)

    def composite(lo_v, hi_v, panels):
        edges = np.linspace(0.0, 1.0, panels + 1)
        width = (hi_v - lo_v)[:, None]
        starts = lo_v[:, None] + width * edges[:-1]
        half = width * (edges[1] - edges[0]) / 2.0
        mids = starts + half
        x = mids[:, :, None] + half[:, :, None] * _GL_NODES
        vals = x * _logistic_pdf(x)
        return np.sum(np.sum(vals * _GL_WEIGHTS, axis=2) * half, axis=1)

    panels = 8
    integral = composite(lo, hi, panels)
    unconverged = np.ones(a.shape, dtype=bool)
    for _ in range(max_refine):
        panels *= 2
        refined = composite(lo[unconverged], hi[unconverged], panels)
        prev = integral[unconverged]
        integral = integral.copy()
        integral[unconverged] = refined
        ok = np.abs(refined - prev) <= rel_tol * np.abs(refined) + 1e-13
        still = unconverged.copy()
        still[unconverged] = ~ok
        unconverged = still
        if not np.any(unconverged):
            break
    else:
        raise QuadratureFailureError(
            "truncated-mean quadrature did not reach the requested tolerance")
    return integral / _logistic_sf(a)


_SQRT_2_OVER_PI = float(np.sqrt(2.0 / np.pi))


def _normal_mean_excess(a: np.ndarray) -> np.ndarray:
    """E(E | E >= a) for a standard normal variable.

    This is the normal hazard phi(a)/(1-Phi(a)) = sqrt(2/pi)/erfcx(a/sqrt(2)),
    stable over the whole real line (erfcx overflows to +inf far in the left
    tail, where the hazard is a true zero).
    """
    a = np.asarray(a, dtype=float)
    with np.errstate(over="ignore"):
        return _SQRT_2_OVER_PI / special.erfcx(a / np.sqrt(2.0))


def _q_aft(fit: AftFit, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    loc = fit.intercept + fit.slope * w
    with np.errstate(divide="ignore"):
        log_u = np.log(u)
    a = np.where(u > 0, (log_u - loc) / fit.scale, -np.inf)
    if fit.distribution == "lognormal":
        excess = _normal_mean_excess(a)
    else:
        excess = _logistic_mean_excess_quad(np.maximum(a, -45.0))
    return loc + fit.scale * excess


def _q_cox(fit: CoxFit, max_obs_time: float, u: np.ndarray, w: np.ndarray,
           chunk: int | None = None) -> np.ndarray:
    """Conditional mean of log T under the implied Cox survival curve.

    The implied distribution places its jump mass at the observed event
    times and its residual tail mass at the maximum observed time.
    """
    ev_times = fit.event_times
    log_ev = np.log(ev_times)
    cumhaz = fit.baseline_cumhaz.values
    cumhaz_prev = np.concatenate(([0.0], cumhaz[:-1]))
    log_tmax = float(np.log(max_obs_time))
    if chunk is None:
        chunk = max(1, int(2_000_000 / max(1, ev_times.size)))
    out = np.empty(u.shape, dtype=float)
    fallback = u > ev_times[-1]
    out[fallback] = log_tmax
    todo = np.flatnonzero(~fallback)
    for blk_start in range(0, todo.size, chunk):
        idx = todo[blk_start:blk_start + chunk]
        r = np.exp(fit.coefficient * w[idx])[:, None]
        s_prev = np.exp(-cumhaz_prev * r)
        s_at = np.exp(-cumhaz * r)
        jump_mass = s_prev - s_at
        include = ev_times >= u[idx, None]
        numer = np.sum(np.where(include, log_ev * jump_mass, 0.0), axis=1)
        numer += s_at[:, -1] * log_tmax
        # survival just below u: cumulative hazard of the last event time < u
        pos = np.searchsorted(ev_times, u[idx], side="left")
        haz_left = np.concatenate(([0.0], cumhaz))[pos]
        denom = np.exp(-haz_left * r[:, 0])
        out[idx] = numer / denom
    return out


def q_y_batch(model: CondExpModel, u, w) -> np.ndarray:
    """Vectorized E(log T | T >= u, W = w) under the fitted model."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    u, w = np.broadcast_arrays(u, w)
    if np.any(u < 0):
        raise NegativeUError("conditional expectations need u >= 0")
    if isinstance(model.fit, CoxFit):
        return _q_cox(model.fit, model.max_obs_time, u, w)
    return _q_aft(model.fit, u, w)


def q_y(model: CondExpModel, u: float, w: float) -> float:
    """E(log T | T >= u, W = w) under the fitted model."""
    return float(q_y_batch(model, np.array([u]), np.array([w]))[0])
