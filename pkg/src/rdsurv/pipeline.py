"""End-to-end estimation pipeline shared by the CLI, bootstrap and simulations."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .bandwidth import CvResult, default_grid, select_bandwidth
from .condexp import CondExpModel, fit_cond_exp
from .data import ObservedSample
from .estimation import RdEstimate, estimate_fuzzy, estimate_sharp
from .survival import (StepFunction, km_censoring_survival,
                       nelson_aalen_censoring)
from .transforms import TransformedSample, transform_all

DESIGNS = ("sharp", "fuzzy")
TRANSFORMS = ("ipcw", "dr")
COND_EXP_MODELS = ("lognormal", "loglogistic", "cox")


@dataclass(frozen=True)
class PipelineSpec:
    """Everything needed to turn an observed sample into an RD estimate."""

    cutoff: float
    design: str = "sharp"
    transform: str = "dr"
    cond_exp: Optional[str] = "lognormal"
    truncation_quantile: float = 0.95
    xi: float = 0.5
    grid: Optional[np.ndarray] = None
    bandwidth: Optional[float] = None

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise ValueError(f"unknown design {self.design!r}")
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}")
        if self.transform == "dr":
            if self.cond_exp not in COND_EXP_MODELS:
                raise ValueError(
                    f"doubly robust transform needs a model from {COND_EXP_MODELS}")

    def with_bandwidth(self, bandwidth: float) -> "PipelineSpec":
        return replace(self, bandwidth=float(bandwidth))


@dataclass(frozen=True)
class Nuisances:
    g_hat: StepFunction
    lambda_g: Optional[StepFunction]
    model: Optional[CondExpModel]
    omega: Optional[float] = None


@dataclass(frozen=True)
class PipelineResult:
    estimate: RdEstimate
    ts: TransformedSample
    nuisances: Nuisances
    cv: Optional[CvResult]


def fit_nuisances(sample: ObservedSample, spec: PipelineSpec) -> Nuisances:
    g_hat = km_censoring_survival(sample, spec.truncation_quantile)
    omega = None
    if spec.truncation_quantile < 1.0:
        omega = float(np.quantile(sample.time_obs, spec.truncation_quantile))
    if spec.transform == "dr":
        # hazard and survival must describe the same (truncated) censoring law
        lambda_g = nelson_aalen_censoring(sample, spec.truncation_quantile)
        model = fit_cond_exp(sample, spec.cond_exp)
    else:
        lambda_g, model = None, None
    return Nuisances(g_hat=g_hat, lambda_g=lambda_g, model=model, omega=omega)


def make_transform(sample: ObservedSample, spec: PipelineSpec,
                   nuisances: Nuisances) -> TransformedSample:
    return transform_all(sample, spec.transform, nuisances.g_hat,
                         nuisances.lambda_g, nuisances.model, nuisances.omega)


def estimate_at(ts: TransformedSample, spec: PipelineSpec, bandwidth: float) -> RdEstimate:
    if spec.design == "fuzzy":
        return estimate_fuzzy(ts, spec.cutoff, bandwidth)
    return estimate_sharp(ts, spec.cutoff, bandwidth)


def run_pipeline(sample: ObservedSample, spec: PipelineSpec) -> PipelineResult:
    """Censoring fit, working-model fit, transform, bandwidth, estimate."""
    nuisances = fit_nuisances(sample, spec)
    ts = make_transform(sample, spec, nuisances)
    cv = None
    if spec.bandwidth is None:
        grid = spec.grid if spec.grid is not None else default_grid(sample.forcing)
        z = sample.treated if spec.design == "fuzzy" else None
        cv = select_bandwidth(ts, spec.cutoff, xi=spec.xi, grid=grid, z=z)
        bandwidth = cv.chosen
    else:
        bandwidth = float(spec.bandwidth)
    estimate = estimate_at(ts, spec, bandwidth)
    return PipelineResult(estimate=estimate, ts=ts, nuisances=nuisances, cv=cv)
