"""CSV ingestion, sample serialization and RD-plot data export.

The accepted dialect is fixed: comma separated, header row required, '.'
decimal point, UTF-8. Diagnostics carry 1-based file line numbers (the
header is line 1).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import ObservedSample
from .errors import MissingColumnError, NonPositiveTimeError, ParseError
from .estimation import RdEstimate
from .transforms import TransformedSample

DEFAULT_COLUMNS = {"time": "time", "status": "status", "forcing": "forcing",
                   "treatment": "treatment"}


def ingest_csv(path, mapping: Optional[dict] = None) -> ObservedSample:
    """Parse a CSV file into an observed sample.

    `mapping` maps the roles time/status/forcing/treatment to column names.
    The treatment column is optional; when absent every record is marked
    untreated and the caller is expected to derive treatment from the
    forcing value (sharp designs).
    """
    cols = dict(DEFAULT_COLUMNS)
    cols.update(mapping or {})
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError("file is empty or has no header row")
        for role in ("time", "status", "forcing"):
            if cols[role] not in reader.fieldnames:
                raise MissingColumnError(
                    f"column {cols[role]!r} (role {role}) not found in header")
        has_treatment = cols["treatment"] in reader.fieldnames
        times, status, forcing, treated = [], [], [], []
        for line_no, row in enumerate(reader, start=2):
            try:
                t = float(row[cols["time"]])
                s = row[cols["status"]].strip()
                w = float(row[cols["forcing"]])
            except (TypeError, ValueError) as exc:
                raise ParseError(f"unparseable numeric value ({exc})", row=line_no) from exc
            if not np.isfinite(t) or t <= 0:
                raise NonPositiveTimeError(f"time {t!r} is not a positive number",
                                           row=line_no)
            if s not in ("0", "1"):
                raise ParseError(f"status must be 0 or 1, got {s!r}", row=line_no)
            if not np.isfinite(w):
                raise ParseError(f"forcing value {w!r} is not finite", row=line_no)
            if has_treatment:
                z = row[cols["treatment"]].strip()
                if z not in ("0", "1"):
                    raise ParseError(f"treatment must be 0 or 1, got {z!r}", row=line_no)
                treated.append(z == "1")
            else:
                treated.append(False)
            times.append(t)
            status.append(s == "1")
            forcing.append(w)
    if not times:
        raise ParseError("file contains a header but no data rows")
    return ObservedSample(np.array(times), np.array(status),
                          np.array(forcing), np.array(treated))


def write_sample_csv(sample: ObservedSample, path, mapping: Optional[dict] = None) -> None:
    """Serialize a sample; `ingest_csv` of the output reproduces it exactly."""
    cols = dict(DEFAULT_COLUMNS)
    cols.update(mapping or {})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([cols["time"], cols["status"], cols["forcing"], cols["treatment"]])
        for rec in sample:
            writer.writerow([repr(rec.time_obs), int(rec.event),
                             repr(rec.forcing), int(rec.treated)])


@dataclass(frozen=True)
class RdPlotData:
    bin_centers: np.ndarray
    bin_means: np.ndarray  # NaN for empty bins
    bin_counts: np.ndarray
    side: list
    cutoff: float
    fitted: dict = field(default_factory=dict)


def rdplot_data(ts: TransformedSample, cutoff: float, bins_per_side: int,
                est: Optional[RdEstimate] = None) -> RdPlotData:
    """Local sample means of the pseudo-responses over evenly-spaced bins.

    Each side of the cutoff is split into `bins_per_side` equal-width bins;
    no bin straddles the cutoff.
    """
    if bins_per_side < 1:
        raise ValueError("bins_per_side must be at least 1")
    w = ts.forcing
    y = ts.pseudo_y
    centers, means, counts, sides = [], [], [], []

    def add_bins(lo, hi, mask, side):
        if not np.any(mask):
            return
        if hi <= lo:  # all mass at one point
            centers.append(lo)
            counts.append(int(np.count_nonzero(mask)))
            means.append(float(np.mean(y[mask])))
            sides.append(side)
            return
        edges = np.linspace(lo, hi, bins_per_side + 1)
        width = edges[1] - edges[0]
        wv = w[mask]
        yv = y[mask]
        idx = np.clip(((wv - lo) / width).astype(int), 0, bins_per_side - 1)
        for b in range(bins_per_side):
            sel = idx == b
            centers.append((edges[b] + edges[b + 1]) / 2.0)
            counts.append(int(np.count_nonzero(sel)))
            means.append(float(np.mean(yv[sel])) if np.any(sel) else np.nan)
            sides.append(side)

    left_mask = w < cutoff
    right_mask = ~left_mask
    if np.any(left_mask):
        add_bins(float(w[left_mask].min()), cutoff, left_mask, "left")
    if np.any(right_mask):
        add_bins(cutoff, float(w[right_mask].max()), right_mask, "right")

    fitted = {}
    if est is not None:
        fitted = {"left": {"alpha": est.y_fits.left.alpha, "beta": est.y_fits.left.beta},
                  "right": {"alpha": est.y_fits.right.alpha, "beta": est.y_fits.right.beta},
                  "bandwidth": est.bandwidth}
    return RdPlotData(bin_centers=np.array(centers), bin_means=np.array(means),
                      bin_counts=np.array(counts), side=sides, cutoff=float(cutoff),
                      fitted=fitted)


def rdplot_rows(plot: RdPlotData) -> list:
    rows = []
    for i in range(plot.bin_centers.size):
        mean = plot.bin_means[i]
        rows.append({"bin_center": float(plot.bin_centers[i]),
                     "bin_mean": None if np.isnan(mean) else float(mean),
                     "bin_count": int(plot.bin_counts[i]),
                     "side": plot.side[i]})
    return rows
