"""Regression discontinuity estimation for right-censored time-to-event data.

The package turns censored observations into pseudo-responses whose
conditional mean matches that of log failure time (inverse probability of
censoring weighting, or a doubly robust augmentation), then applies local
linear RD machinery: one-sided triangular-kernel fits at the cutoff,
cross-validated bandwidths, sandwich / nearest-neighbor / bootstrap
standard errors, and a Monte-Carlo study harness.
"""

__version__ = "0.1.0"

from .bandwidth import (CvResult, cv_curve, default_grid, lm_cv_score,
                        select_bandwidth)
from .condexp import (AftFit, CondExpModel, CoxFit, fit_aft, fit_cond_exp,
                      fit_cox, q_y, q_y_batch)
from .data import ObservedRecord, ObservedSample
from .estimation import RdEstimate, SidePair, estimate_fuzzy, estimate_sharp
from .inference import (SeReport, VarianceComponents, bootstrap_se,
                        build_se_report, variance_nn, variance_plugin)
from .io import RdPlotData, ingest_csv, rdplot_data, write_sample_csv
from .loclin import SideFit, kernel_triangular, llr_fit
from .pipeline import PipelineSpec, run_pipeline
from .rng import stream
from .simulation import (DgpConfig, FUZZY_DENOMINATOR, McSummary, gen_fuzzy,
                         gen_sharp, run_study, true_tau)
from .survival import StepFunction, km_censoring_survival, nelson_aalen_censoring
from .transforms import (TransformedSample, transform_all, transform_dr,
                         transform_ipcw)

__all__ = [
    "AftFit", "CondExpModel", "CoxFit", "CvResult", "DgpConfig",
    "FUZZY_DENOMINATOR", "McSummary", "ObservedRecord", "ObservedSample",
    "PipelineSpec", "RdEstimate", "RdPlotData", "SeReport", "SideFit",
    "SidePair", "StepFunction", "TransformedSample", "VarianceComponents",
    "bootstrap_se", "build_se_report", "cv_curve", "default_grid",
    "estimate_fuzzy", "estimate_sharp", "fit_aft", "fit_cond_exp", "fit_cox",
    "gen_fuzzy", "gen_sharp", "ingest_csv", "kernel_triangular", "llr_fit",
    "lm_cv_score", "nelson_aalen_censoring", "km_censoring_survival", "q_y",
    "q_y_batch", "rdplot_data", "run_pipeline", "run_study", "select_bandwidth",
    "stream", "transform_all", "transform_dr", "transform_ipcw", "true_tau",
    "variance_nn", "variance_plugin", "write_sample_csv",
]
