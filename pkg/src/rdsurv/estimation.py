"""Sharp and fuzzy RD point estimation from a transformed sample."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (InsufficientSupportError, SingularDesignError,
                     WeakDiscontinuityError)
from .loclin import SideFit, llr_fit
from .transforms import TransformedSample

DENOMINATOR_FLOOR = 1e-6


@dataclass(frozen=True)
class SidePair:
    left: SideFit
    right: SideFit


@dataclass(frozen=True)
class RdEstimate:
    tau: float
    design: str
    y_fits: SidePair
    z_fits: Optional[SidePair]
    bandwidth: float
    tau_y: float
    tau_z: Optional[float]


def _fit_both_sides(forcing, response, cutoff, bandwidth) -> SidePair:
    fits = {}
    for side in ("left", "right"):
        try:
            fits[side] = llr_fit(forcing, response, cutoff, side, bandwidth)
        except (InsufficientSupportError, SingularDesignError) as exc:
            raise type(exc)(f"{side} side: {exc}") from exc
    return SidePair(left=fits["left"], right=fits["right"])


def estimate_sharp(ts: TransformedSample, cutoff: float, bandwidth: float) -> RdEstimate:
    """Jump in the pseudo-response mean at the cutoff."""
    y_fits = _fit_both_sides(ts.forcing, ts.pseudo_y, cutoff, bandwidth)
    tau = y_fits.right.alpha - y_fits.left.alpha
    return RdEstimate(tau=tau, design="sharp", y_fits=y_fits, z_fits=None,
                      bandwidth=float(bandwidth), tau_y=tau, tau_z=None)


def estimate_fuzzy(ts: TransformedSample, cutoff: float, bandwidth: float) -> RdEstimate:
    """Ratio of the pseudo-response jump to the treatment-probability jump."""
    y_fits = _fit_both_sides(ts.forcing, ts.pseudo_y, cutoff, bandwidth)
    z = ts.treated.astype(float)
    z_fits = _fit_both_sides(ts.forcing, z, cutoff, bandwidth)
    tau_y = y_fits.right.alpha - y_fits.left.alpha
    tau_z = z_fits.right.alpha - z_fits.left.alpha
    if abs(tau_z) < DENOMINATOR_FLOOR:
        raise WeakDiscontinuityError(
            f"treatment probability jump {tau_z:.3e} is below {DENOMINATOR_FLOOR:g}; "
            "no identifiable discontinuity")
    return RdEstimate(tau=tau_y / tau_z, design="fuzzy", y_fits=y_fits,
                      z_fits=z_fits, bandwidth=float(bandwidth),
                      tau_y=tau_y, tau_z=tau_z)
