"""Command-line interface.

Subcommands:

* estimate - run the full pipeline on a CSV file and emit a JSON report;
* simulate - Monte-Carlo bias / SE / coverage study, emitted as CSV + JSON;
* rdplot   - binned means of the pseudo-responses for plotting.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 estimation error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .bandwidth import default_grid
from .data import ObservedSample
from .errors import DataError, RdSurvError
from .inference import build_se_report
from .io import ingest_csv, rdplot_data, rdplot_rows
from .pipeline import PipelineSpec, run_pipeline
from .simulation import METHODS, run_study

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_ESTIMATION = 4


class CliConfigError(Exception):
    pass


def _add_io_flags(p):
    p.add_argument("--input", required=True, help="input CSV path")
    p.add_argument("--output", default=None, help="output path (default: stdout)")
    p.add_argument("--time-col", default="time")
    p.add_argument("--status-col", default="status")
    p.add_argument("--forcing-col", default="forcing")
    p.add_argument("--treatment-col", default="treatment")


def _add_pipeline_flags(p):
    p.add_argument("--cutoff", type=float, required=True)
    p.add_argument("--design", choices=("sharp", "fuzzy"), default="sharp")
    p.add_argument("--transform", choices=("ipcw", "dr"), default="dr")
    p.add_argument("--model", choices=("lognormal", "loglogistic", "cox"),
                   default="lognormal", help="conditional-expectation model (dr only)")
    p.add_argument("--bandwidth", default="auto",
                   help="'auto' for cross-validation or a positive number")
    p.add_argument("--xi", type=float, default=0.5)
    p.add_argument("--grid-size", type=int, default=25)
    p.add_argument("--truncation-quantile", type=float, default=0.95)


def build_parser():
    parser = argparse.ArgumentParser(prog="rdsurv", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate an RD effect from a CSV file")
    _add_io_flags(est)
    _add_pipeline_flags(est)
    est.add_argument("--se", default="nn",
                     help="comma list from {nn, plugin, boot, all}, or 'none'")
    est.add_argument("--boot-reps", type=int, default=50)
    est.add_argument("--nn-k", type=int, default=3)
    est.add_argument("--level", type=float, default=0.95)
    est.add_argument("--seed", type=int, default=0)

    sim = sub.add_parser("simulate", help="run a Monte-Carlo study")
    sim.add_argument("--design", choices=("sharp", "fuzzy"), default="sharp")
    sim.add_argument("--n", type=int, default=400)
    sim.add_argument("--n-reps", type=int, default=500)
    sim.add_argument("--methods", default=",".join(METHODS),
                     help=f"comma list from {METHODS}")
    sim.add_argument("--se", default="nn,plugin",
                     help="comma list from {nn, plugin, boot}")
    sim.add_argument("--boot-reps", type=int, default=50)
    sim.add_argument("--nn-k", type=int, default=3)
    sim.add_argument("--level", type=float, default=0.95)
    sim.add_argument("--grid-size", type=int, default=25)
    sim.add_argument("--xi", type=float, default=0.5)
    sim.add_argument("--truncation-quantile", type=float, default=0.95)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--threads", type=int, default=1)
    sim.add_argument("--output", default=None,
                     help="output prefix; writes <prefix>.csv and <prefix>.json")

    plot = sub.add_parser("rdplot", help="binned pseudo-response means for plotting")
    _add_io_flags(plot)
    _add_pipeline_flags(plot)
    plot.add_argument("--bins-per-side", type=int, default=20)
    return parser


def _parse_bandwidth(raw):
    if raw == "auto":
        return None
    try:
        value = float(raw)
    except ValueError:
        raise CliConfigError(f"--bandwidth must be 'auto' or a number, got {raw!r}")
    if value <= 0:
        raise CliConfigError("--bandwidth must be positive")
    return value


def _load_sample(args):
    mapping = {"time": args.time_col, "status": args.status_col,
               "forcing": args.forcing_col, "treatment": args.treatment_col}
    return ingest_csv(args.input, mapping)


def _make_spec(args, sample):
    bandwidth = _parse_bandwidth(args.bandwidth)
    grid = default_grid(sample.forcing, args.grid_size) if bandwidth is None else None
    try:
        return PipelineSpec(cutoff=args.cutoff, design=args.design,
                            transform=args.transform,
                            cond_exp=args.model if args.transform == "dr" else None,
                            truncation_quantile=args.truncation_quantile,
                            xi=args.xi, grid=grid, bandwidth=bandwidth)
    except ValueError as exc:
        raise CliConfigError(str(exc))


def _collect_warnings(args, sample: ObservedSample, result) -> list:
    warnings = []
    w = sample.forcing
    if not (w.min() <= args.cutoff <= w.max()):
        warnings.append(f"cutoff {args.cutoff:g} lies outside the observed "
                        f"forcing range [{w.min():g}, {w.max():g}]")
    omega = float(np.quantile(sample.time_obs, args.truncation_quantile))
    n_trunc = int(np.count_nonzero(sample.time_obs > omega))
    if n_trunc:
        warnings.append(f"{n_trunc} record(s) truncated at {omega:g} "
                        "for the censoring fit")
    if result.cv is not None and result.cv.skip_fractions is not None:
        at = int(np.argmin(np.abs(result.cv.grid - result.estimate.bandwidth)))
        frac = float(result.cv.skip_fractions[at])
        if frac > 0:
            warnings.append(f"cross-validation skipped {frac:.1%} of window "
                            "records at the chosen bandwidth")
    if result.estimate.design == "fuzzy" and abs(result.estimate.tau_z) < 0.1:
        warnings.append(f"treatment probability jump is small "
                        f"({result.estimate.tau_z:.4f}); estimate may be unstable")
    return warnings


def _emit(payload: str, output):
    if output is None:
        sys.stdout.write(payload)
    else:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(payload)


def _cmd_estimate(args) -> int:
    sample = _load_sample(args)
    spec = _make_spec(args, sample)
    result = run_pipeline(sample, spec)
    est = result.estimate

    schemes_raw = args.se.strip().lower()
    report_se = None
    if schemes_raw != "none":
        schemes = tuple(s.strip() for s in schemes_raw.split(",") if s.strip())
        report_se = build_se_report(sample, spec, est, result.ts, schemes,
                                    level=args.level, neighbors=args.nn_k,
                                    boot_reps=args.boot_reps, seed=args.seed)

    report = {
        "tau": est.tau,
        "design": est.design,
        "transform": spec.transform,
        "model": spec.cond_exp,
        "bandwidth": est.bandwidth,
        "tau_y": est.tau_y,
        "tau_z": est.tau_z,
        "cv": None if result.cv is None else {
            "grid": result.cv.grid.tolist(),
            "scores": result.cv.scores.tolist(),
            "scores_z": None if result.cv.scores_z is None else result.cv.scores_z.tolist(),
            "chosen": result.cv.chosen,
            "xi": result.cv.xi,
        },
        "se": None if report_se is None else {
            "nn": report_se.se_nn,
            "plugin": report_se.se_plugin,
            "boot": report_se.se_boot,
        },
        "ci": None if report_se is None else {
            "level": report_se.level,
            "normal": report_se.ci_normal,
            "boot_empirical": report_se.ci_boot_empirical,
        },
        "censoring_rate": sample.censoring_rate,
        "n": sample.n,
        "n_left": int(np.count_nonzero(sample.forcing < args.cutoff)),
        "n_right": int(np.count_nonzero(sample.forcing >= args.cutoff)),
        "warnings": _collect_warnings(args, sample, result),
    }
    _emit(json.dumps(report, indent=2) + "\n", args.output)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    schemes = tuple(s.strip() for s in args.se.split(",") if s.strip())
    summaries = run_study(args.design, args.n, methods, n_reps=args.n_reps,
                          seed=args.seed, se_schemes=schemes, nn_k=args.nn_k,
                          boot_reps=args.boot_reps, level=args.level,
                          truncation_quantile=args.truncation_quantile,
                          xi=args.xi, grid_size=args.grid_size,
                          n_threads=args.threads)
    rows = []
    for s in summaries:
        row = {"method": s.method, "bias": s.bias, "mean_tau": s.mean_tau,
               "sd_tau": s.sd_tau, "n_reps": s.n_reps, "n_failed": s.n_failed,
               "censor_rate": s.censor_rate}
        for scheme, val in s.mean_se.items():
            row[f"se_{scheme}"] = val
        for scheme, val in s.coverage.items():
            row[f"cover_{scheme}"] = val
        rows.append(row)

    header = list(rows[0].keys())
    csv_lines = [",".join(header)]
    for row in rows:
        csv_lines.append(",".join(str(row[k]) for k in header))
    csv_text = "\n".join(csv_lines) + "\n"
    json_text = json.dumps({"design": args.design, "n": args.n,
                            "n_reps": args.n_reps, "seed": args.seed,
                            "results": rows}, indent=2) + "\n"
    if args.output is None:
        sys.stdout.write(csv_text)
    else:
        with open(args.output + ".csv", "w", encoding="utf-8") as fh:
            fh.write(csv_text)
        with open(args.output + ".json", "w", encoding="utf-8") as fh:
            fh.write(json_text)
    return EXIT_OK


def _cmd_rdplot(args) -> int:
    sample = _load_sample(args)
    spec = _make_spec(args, sample)
    result = run_pipeline(sample, spec)
    plot = rdplot_data(result.ts, args.cutoff, args.bins_per_side, result.estimate)
    payload = {
        "cutoff": plot.cutoff,
        "bins_per_side": args.bins_per_side,
        "fitted": plot.fitted,
        "bins": rdplot_rows(plot),
    }
    _emit(json.dumps(payload, indent=2) + "\n", args.output)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "estimate":
            return _cmd_estimate(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "rdplot":
            return _cmd_rdplot(args)
        raise CliConfigError(f"unknown command {args.command!r}")
    except CliConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DataError as exc:
        print(f"data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RdSurvError as exc:
        print(f"estimation error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
