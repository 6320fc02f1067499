"""One-sided local linear regression with a triangular kernel.

The workhorse for everything at the cutoff: weighted least squares of
degree one on one side of a boundary point, solved through the explicit
2x2 normal equations with exact (compensated) accumulation so results are
deterministic under record reordering and sample duplication.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientSupportError, SingularDesignError

COND_LIMIT = 1e12


def kernel_triangular(u):
    """Triangular kernel: 1 - |u| on [-1, 1], zero outside."""
    u = np.asarray(u, dtype=float)
    out = np.maximum(0.0, 1.0 - np.abs(u))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SideFit:
    """One-sided fit: response ~ alpha + beta * (W - cutoff), kernel weighted.

    `gram` is the weighted Gram matrix in the bandwidth-scaled basis
    (1, (W - cutoff)/bandwidth).
    """

    alpha: float
    beta: float
    side: str
    n_effective: int
    gram: np.ndarray


def _gram_condition(s0, s1, s2):
    """Extreme eigenvalues of the symmetric 2x2 [[s0, s1], [s1, s2]]."""
    trace = s0 + s2
    disc = np.sqrt(np.maximum(0.0, (s0 - s2) ** 2 + 4.0 * s1 * s1))
    return (trace + disc) / 2.0, (trace - disc) / 2.0


def llr_fit(forcing, response, cutoff: float, side: str, bandwidth: float) -> SideFit:
    """Fit the one-sided local linear regression at `cutoff`.

    Records with the forcing value exactly at the cutoff belong to the
    right side.
    """
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    w = np.asarray(forcing, dtype=float)
    y = np.asarray(response, dtype=float)
    u = (w - cutoff) / bandwidth
    mask = (w >= cutoff) if side == "right" else (w < cutoff)
    k = np.where(mask, np.maximum(0.0, 1.0 - np.abs(u)), 0.0)
    pos = k > 0.0
    n_eff = int(np.count_nonzero(pos))
    if np.unique(w[pos]).size < 2:
        raise InsufficientSupportError(
            f"{n_eff} record(s) with positive weight, need 2 distinct forcing values")

    ku, kp, up, yp = k[pos] * u[pos], k[pos], u[pos], y[pos]
    s0 = math.fsum(kp)
    s1 = math.fsum(ku)
    s2 = math.fsum(ku * up)
    t0 = math.fsum(kp * yp)
    t1 = math.fsum(ku * yp)
    lam_max, lam_min = _gram_condition(s0, s1, s2)
    if lam_min <= 0.0 or lam_max / lam_min > COND_LIMIT:
        raise SingularDesignError(
            f"weighted design is numerically singular (condition {lam_max / max(lam_min, 1e-300):.2e})")
    det = s0 * s2 - s1 * s1
    alpha = (s2 * t0 - s1 * t1) / det
    beta_scaled = (s0 * t1 - s1 * t0) / det
    gram = np.array([[s0, s1], [s1, s2]])
    return SideFit(alpha=float(alpha), beta=float(beta_scaled / bandwidth),
                   side=side, n_effective=n_eff, gram=gram)
