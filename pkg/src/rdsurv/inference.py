"""Standard errors for RD estimates.

Sandwich variance with two flavors of meat matrix: plug-in residuals
(deviations of each weighted record from its side's intercept) or local
nearest-neighbor variance proxies. For fuzzy designs the numerator and
denominator variances and their covariance combine through the delta
method. A nonparametric bootstrap re-runs the whole pipeline on resampled
records, holding the bandwidth fixed at the original selection.

All kernel-weighted sums use the bandwidth-scaled basis b = (1, (W-w0)/h),
so the Gram matrices stored on the side fits are reused directly.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm

from .data import ObservedSample
from .errors import (RdSurvError, SingularGammaError, TooFewNeighborsError,
                     TooManyFailedReplicatesError)
from .estimation import RdEstimate
from .loclin import COND_LIMIT, _gram_condition
from .pipeline import PipelineSpec, estimate_at, fit_nuisances, make_transform
from .rng import stream
from .transforms import TransformedSample


@dataclass(frozen=True)
class VarianceComponents:
    gamma_plus: np.ndarray
    gamma_minus: np.ndarray
    phi_yy_plus: np.ndarray
    phi_yy_minus: np.ndarray
    phi_yz_plus: Optional[np.ndarray] = None
    phi_yz_minus: Optional[np.ndarray] = None
    phi_zz_plus: Optional[np.ndarray] = None
    phi_zz_minus: Optional[np.ndarray] = None


@dataclass(frozen=True)
class SeReport:
    level: float
    se_nn: Optional[float] = None
    se_plugin: Optional[float] = None
    se_boot: Optional[float] = None
    ci_normal: Optional[dict] = None
    ci_boot_empirical: Optional[tuple] = None


def _weights(ts: TransformedSample, cutoff: float, bandwidth: float):
    u = (ts.forcing - cutoff) / bandwidth
    k = np.maximum(0.0, 1.0 - np.abs(u))
    right = ts.forcing >= cutoff
    return u, k, right


def _phi(u, k2, s):
    """Sum of k^2 * s * b b' for b = (1, u)."""
    p00 = float(np.sum(k2 * s))
    p01 = float(np.sum(k2 * s * u))
    p11 = float(np.sum(k2 * s * u * u))
    return np.array([[p00, p01], [p01, p11]])


def _sandwich(gram: np.ndarray, phi: np.ndarray) -> float:
    """First diagonal element of gram^{-1} phi gram^{-1}."""
    lam_max, lam_min = _gram_condition(gram[0, 0], gram[0, 1], gram[1, 1])
    if lam_min <= 0.0 or lam_max / lam_min > COND_LIMIT:
        raise SingularGammaError("weighted Gram matrix is numerically singular")
    det = gram[0, 0] * gram[1, 1] - gram[0, 1] ** 2
    # first row of the inverse
    v = np.array([gram[1, 1], -gram[0, 1]]) / det
    return float(v @ phi @ v)


def _nn_deviation(forcing_side: np.ndarray, values_side: np.ndarray,
                  neighbors: int) -> np.ndarray:
    """Deviation of each record from the mean of its k nearest same-side
    neighbors in the forcing value; distance ties break by record position."""
    m = forcing_side.size
    if m <= neighbors:
        raise TooFewNeighborsError(
            f"side has {m} records, need more than {neighbors}")
    devs = np.empty(m)
    idx = np.arange(m)
    for i in range(m):
        dist = np.abs(forcing_side - forcing_side[i])
        dist[i] = np.inf
        order = np.lexsort((idx, dist))
        devs[i] = values_side[i] - np.mean(values_side[order[:neighbors]])
    return devs


def _components(est: RdEstimate, ts: TransformedSample, cutoff: float,
                bandwidth: float, flavor: str, neighbors: int) -> VarianceComponents:
    u, k, right = _weights(ts, cutoff, bandwidth)
    k2 = k * k
    y = ts.pseudo_y
    z = ts.treated.astype(float)
    fuzzy = est.design == "fuzzy"

    if flavor == "plugin":
        dev_y = np.where(right, y - est.y_fits.right.alpha, y - est.y_fits.left.alpha)
        if fuzzy:
            dev_z = np.where(right, z - est.z_fits.right.alpha, z - est.z_fits.left.alpha)
        scale = 1.0
    else:
        dev_y = np.empty(ts.n)
        dev_y[right] = _nn_deviation(ts.forcing[right], y[right], neighbors)
        dev_y[~right] = _nn_deviation(ts.forcing[~right], y[~right], neighbors)
        if fuzzy:
            dev_z = np.empty(ts.n)
            dev_z[right] = _nn_deviation(ts.forcing[right], z[right], neighbors)
            dev_z[~right] = _nn_deviation(ts.forcing[~right], z[~right], neighbors)
        scale = neighbors / (neighbors + 1.0)

    kw = {}
    kw["phi_yy_plus"] = _phi(u, k2 * right, scale * dev_y * dev_y)
    kw["phi_yy_minus"] = _phi(u, k2 * ~right, scale * dev_y * dev_y)
    if fuzzy:
        kw["phi_yz_plus"] = _phi(u, k2 * right, scale * dev_y * dev_z)
        kw["phi_yz_minus"] = _phi(u, k2 * ~right, scale * dev_y * dev_z)
        kw["phi_zz_plus"] = _phi(u, k2 * right, scale * dev_z * dev_z)
        kw["phi_zz_minus"] = _phi(u, k2 * ~right, scale * dev_z * dev_z)
    return VarianceComponents(gamma_plus=est.y_fits.right.gram,
                              gamma_minus=est.y_fits.left.gram, **kw)


def _assemble(est: RdEstimate, comp: VarianceComponents) -> float:
    v_yy = (_sandwich(comp.gamma_plus, comp.phi_yy_plus)
            + _sandwich(comp.gamma_minus, comp.phi_yy_minus))
    if est.design == "sharp":
        return v_yy
    v_yz = (_sandwich(comp.gamma_plus, comp.phi_yz_plus)
            + _sandwich(comp.gamma_minus, comp.phi_yz_minus))
    v_zz = (_sandwich(comp.gamma_plus, comp.phi_zz_plus)
            + _sandwich(comp.gamma_minus, comp.phi_zz_minus))
    tz, ty = est.tau_z, est.tau_y
    return v_yy / tz ** 2 - 2.0 * ty * v_yz / tz ** 3 + ty ** 2 * v_zz / tz ** 4


def variance_plugin(est: RdEstimate, ts: TransformedSample, cutoff: float,
                    bandwidth: float) -> float:
    """Sandwich variance with plug-in residuals against the side intercepts."""
    return _assemble(est, _components(est, ts, cutoff, bandwidth, "plugin", 0))


def variance_nn(est: RdEstimate, ts: TransformedSample, cutoff: float,
                bandwidth: float, neighbors: int = 3) -> float:
    """Sandwich variance with nearest-neighbor local variance proxies."""
    if neighbors < 1:
        raise ValueError("neighbors must be at least 1")
    return _assemble(est, _components(est, ts, cutoff, bandwidth, "nn", neighbors))


# -- bootstrap -------------------------------------------------------------------

def _boot_stats(taus: np.ndarray, level: float):
    se = float(np.std(taus, ddof=1))
    alpha = 1.0 - level
    lo, hi = np.quantile(taus, [alpha / 2.0, 1.0 - alpha / 2.0], method="inverted_cdf")
    return se, (float(lo), float(hi))


def _boot_replicate(sample: ObservedSample, spec: PipelineSpec, seed: int,
                    path: tuple, b: int) -> float:
    rng = stream(seed, *path, b)
    idx = rng.integers(0, sample.n, size=sample.n)
    sub = sample.take(idx)
    nuis = fit_nuisances(sub, spec)
    ts = make_transform(sub, spec, nuis)
    return estimate_at(ts, spec, spec.bandwidth).tau


def bootstrap_se(sample: ObservedSample, spec: PipelineSpec, reps: int,
                 seed: int, level: float = 0.95, n_threads: int = 1,
                 rng_path: tuple = ()):
    """Bootstrap SE and empirical CI of the RD estimate.

    Resamples records with replacement and re-runs the full pipeline
    (censoring fit, working-model fit, transform, estimate) per replicate,
    holding the bandwidth fixed at `spec.bandwidth`. Replicate b draws from
    the stream (seed, *rng_path, b), so results are independent of thread
    count and scheduling.
    """
    if reps < 2:
        raise ValueError("bootstrap needs at least 2 replicates")
    if spec.bandwidth is None:
        raise ValueError("bootstrap requires a fixed bandwidth on the spec")

    taus = np.full(reps, np.nan)
    fails: list = [None] * reps

    def one(b):
        try:
            taus[b] = _boot_replicate(sample, spec, seed, tuple(rng_path), b)
        except RdSurvError as exc:
            fails[b] = type(exc).__name__

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(one, range(reps)))
    else:
        for b in range(reps):
            one(b)

    census: dict = {}
    for name in fails:
        if name is not None:
            census[name] = census.get(name, 0) + 1
    ok = np.isfinite(taus)
    n_failed = int(reps - np.count_nonzero(ok))
    if n_failed > 0.2 * reps:
        raise TooManyFailedReplicatesError(
            f"{n_failed}/{reps} bootstrap replicates failed: {census}", census=census)
    se, ci = _boot_stats(taus[ok], level)
    return se, ci


def normal_ci(tau: float, se: float, level: float) -> tuple:
    zq = float(norm.ppf((1.0 + level) / 2.0))
    return (tau - zq * se, tau + zq * se)


def build_se_report(sample: ObservedSample, spec: PipelineSpec, est: RdEstimate,
                    ts: TransformedSample, schemes=("nn",), level: float = 0.95,
                    neighbors: int = 3, boot_reps: int = 50, seed: int = 0,
                    n_threads: int = 1) -> SeReport:
    """Compute every requested SE scheme and the matching confidence intervals."""
    wanted = set(schemes)
    if "all" in wanted:
        wanted = {"nn", "plugin", "boot"}
    unknown = wanted - {"nn", "plugin", "boot"}
    if unknown:
        raise ValueError(f"unknown SE scheme(s): {sorted(unknown)}")
    se_nn = se_plugin = se_boot = None
    ci_normal = {}
    ci_boot = None
    if "nn" in wanted:
        se_nn = float(np.sqrt(variance_nn(est, ts, spec.cutoff, est.bandwidth, neighbors)))
        ci_normal["nn"] = normal_ci(est.tau, se_nn, level)
    if "plugin" in wanted:
        se_plugin = float(np.sqrt(variance_plugin(est, ts, spec.cutoff, est.bandwidth)))
        ci_normal["plugin"] = normal_ci(est.tau, se_plugin, level)
    if "boot" in wanted:
        se_boot, ci_boot = bootstrap_se(sample, spec.with_bandwidth(est.bandwidth),
                                        boot_reps, seed, level, n_threads)
        ci_normal["boot"] = normal_ci(est.tau, se_boot, level)
    return SeReport(level=level, se_nn=se_nn, se_plugin=se_plugin, se_boot=se_boot,
                    ci_normal=ci_normal or None, ci_boot_empirical=ci_boot)
