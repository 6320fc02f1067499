"""Bandwidth selection by MSE-type cross-validation.

Every record whose forcing value lies inside a trimming window (between the
xi quantile of the left-side values and the 1-xi quantile of the right-side
values) is predicted from a one-sided local linear fit centered at its own
forcing value: records at or right of the cutoff are predicted from records
strictly right of them, the rest from records strictly left of them. Each
prediction therefore extrapolates to a boundary exactly as the cutoff fit
does, and never sees the record it predicts. The criterion is the mean
squared prediction error; for fuzzy designs the same criterion on the
treatment indicator gives a second curve and the smaller of the two
minimizers is used.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import AllInfiniteError, DegenerateWindowError
from .loclin import COND_LIMIT, _gram_condition
from .transforms import TransformedSample

_EVAL_CHUNK = 512
SKIP_LIMIT = 0.2


@dataclass(frozen=True)
class CvResult:
    grid: np.ndarray
    scores: np.ndarray
    chosen: float
    xi: float
    scores_z: Optional[np.ndarray] = None
    chosen_y: Optional[float] = None
    chosen_z: Optional[float] = None
    skip_fractions: Optional[np.ndarray] = None


def default_grid(forcing, size: int = 25) -> np.ndarray:
    """Geometric grid from range/50 to range/1.5."""
    span = float(np.ptp(forcing))
    if span <= 0:
        raise DegenerateWindowError("forcing variable has zero range")
    return np.geomspace(span / 50.0, span / 1.5, size)


def _trim_window(forcing, cutoff, xi):
    if not 0.0 < xi <= 0.5:
        raise ValueError("xi must lie in (0, 0.5]")
    left = forcing[forcing < cutoff]
    right = forcing[forcing >= cutoff]
    if left.size == 0 or right.size == 0:
        raise DegenerateWindowError("no records on one side of the cutoff")
    a_left = float(np.quantile(left, xi))
    a_right = float(np.quantile(right, 1.0 - xi))
    return a_left, a_right


def _cv_engine(forcing, response, cutoff, grid, xi):
    """CV score and skip fraction for each candidate bandwidth."""
    w = np.asarray(forcing, dtype=float)
    y = np.asarray(response, dtype=float)
    n = w.size
    a_left, a_right = _trim_window(w, cutoff, xi)

    order = np.lexsort((y, w))
    ws, ys = w[order], y[order]
    eval_pos = np.flatnonzero((ws >= a_left) & (ws <= a_right))
    if eval_pos.size == 0:
        raise DegenerateWindowError("trimming window contains no records")
    right_of_cut = ws[eval_pos] >= cutoff
    # prefix ids of distinct sorted forcing values, for the support check
    group_id = np.cumsum(np.concatenate(([1], (ws[1:] != ws[:-1]).astype(np.int64))))

    scores = np.empty(grid.size)
    skips = np.empty(grid.size)
    for gi, h in enumerate(grid):
        sse = 0.0
        skipped = 0
        for start in range(0, eval_pos.size, _EVAL_CHUNK):
            pos = eval_pos[start:start + _EVAL_CHUNK]
            wc = ws[pos]
            is_right = right_of_cut[start:start + len(pos)]
            # columns that can carry weight for any point of this chunk
            col_lo = np.searchsorted(ws, wc.min() - h, side="left")
            col_hi = np.searchsorted(ws, wc.max() + h, side="right")
            ws_cols = ws[col_lo:col_hi]
            ys_cols = ys[col_lo:col_hi]
            diff = (ws_cols[None, :] - wc[:, None]) / h
            side_mask = np.where(is_right[:, None],
                                 ws_cols[None, :] > wc[:, None],
                                 ws_cols[None, :] < wc[:, None])
            k = np.where(side_mask, np.maximum(0.0, 1.0 - np.abs(diff)), 0.0)
            posw = k > 0.0
            cnt = np.count_nonzero(posw, axis=1)
            s0 = np.sum(k, axis=1)
            s1 = np.sum(k * diff, axis=1)
            s2 = np.sum(k * diff * diff, axis=1)
            t0 = k @ ys_cols
            t1 = (k * diff) @ ys_cols
            # distinct-support count from the contiguous positive-weight range
            rng_lo = np.where(is_right,
                              np.searchsorted(ws, wc, side="right"),
                              np.searchsorted(ws, wc, side="left") - cnt)
            rng_hi = rng_lo + cnt
            nonempty = cnt > 0
            distinct = np.zeros(len(pos), dtype=np.int64)
            if np.any(nonempty):
                distinct[nonempty] = (group_id[rng_hi[nonempty] - 1]
                                      - group_id[rng_lo[nonempty]] + 1)
            lam_max, lam_min = _gram_condition(s0, s1, s2)
            with np.errstate(divide="ignore", invalid="ignore"):
                ok = (distinct >= 2) & (lam_min > 0.0) & (lam_max / lam_min <= COND_LIMIT)
                det = s0 * s2 - s1 * s1
                alpha = (s2 * t0 - s1 * t1) / det
                resid = ys[pos] - alpha
                sse += float(np.sum(np.where(ok, resid * resid, 0.0)))
            skipped += int(np.count_nonzero(~ok))
        frac = skipped / eval_pos.size
        skips[gi] = frac
        scores[gi] = np.inf if frac > SKIP_LIMIT else sse / n
    return scores, skips


def lm_cv_score(forcing, response, cutoff: float, bandwidth: float, xi: float = 0.5) -> float:
    """Cross-validation score of a single bandwidth."""
    scores, _ = _cv_engine(np.asarray(forcing, dtype=float),
                           np.asarray(response, dtype=float),
                           cutoff, np.array([float(bandwidth)]), xi)
    return float(scores[0])


def cv_curve(forcing, response, cutoff: float, grid, xi: float = 0.5):
    """CV scores over a bandwidth grid; returns (scores, skip fractions)."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be nonempty, positive and strictly increasing")
    return _cv_engine(np.asarray(forcing, dtype=float),
                      np.asarray(response, dtype=float), cutoff, grid, xi)


def pick_min(grid, scores) -> float:
    """Smallest bandwidth attaining the minimum score."""
    if not np.any(np.isfinite(scores)):
        raise AllInfiniteError("every candidate bandwidth scored +inf")
    return float(grid[int(np.argmin(scores))])


def select_bandwidth(ts: TransformedSample, cutoff: float, xi: float = 0.5,
                     grid=None, z=None) -> CvResult:
    """Cross-validated bandwidth for a transformed sample.

    For fuzzy designs pass the treatment indicators as `z`; the chosen
    bandwidth is then the smaller of the response and treatment minimizers.
    """
    grid = default_grid(ts.forcing) if grid is None else np.asarray(grid, dtype=float)
    scores_y, skips = cv_curve(ts.forcing, ts.pseudo_y, cutoff, grid, xi)
    chosen_y = pick_min(grid, scores_y)
    if z is None:
        return CvResult(grid=grid, scores=scores_y, chosen=chosen_y, xi=xi,
                        chosen_y=chosen_y, skip_fractions=skips)
    scores_z, _ = cv_curve(ts.forcing, np.asarray(z, dtype=float), cutoff, grid, xi)
    chosen_z = pick_min(grid, scores_z)
    return CvResult(grid=grid, scores=scores_y, chosen=min(chosen_y, chosen_z),
                    xi=xi, scores_z=scores_z, chosen_y=chosen_y, chosen_z=chosen_z,
                    skip_fractions=skips)
