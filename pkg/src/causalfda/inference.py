"""Covariance estimation and simultaneous confidence bands.

The band construction is the max-type parametric bootstrap: draw centered
Gaussian curves with the estimated influence covariance, take the largest
studentized absolute deviation of each draw, and use its empirical quantile
to scale the band. A per-point normal band is provided for comparison; it
does not deliver simultaneous coverage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DataError
from .estimators import InfluenceMatrix
from .fda import Curve, trapezoid_integrate
from .randproc import CovarianceMatrix, factor_psd

__all__ = [
    "CovEstimate",
    "ConfidenceBand",
    "estimate_sigma",
    "supt_band",
    "pointwise_band",
    "coverage_delta",
]

#: Floor applied to the diagonal, relative to its largest entry, before
#: studentizing; keeps near-degenerate points from blowing up the max.
SIGMA_FLOOR_REL = 1e-12

DEFAULT_BAND_DRAWS = 2000


@dataclass(frozen=True, eq=False)
class CovEstimate:
    """Empirical influence covariance on the dataset grid."""

    cov: CovarianceMatrix
    n: int

    @property
    def grid(self):
        return self.cov.grid

    def sigma_hat(self) -> np.ndarray:
        """Pointwise standard deviations: square root of the diagonal."""
        return np.sqrt(np.maximum(self.cov.diagonal(), 0.0))


@dataclass(frozen=True, eq=False)
class ConfidenceBand:
    """Symmetric band around an estimate with its calibration constant."""

    center: Curve
    lower: Curve
    upper: Curve
    level: float
    calibration: float
    draws: int

    def __post_init__(self):
        self.center.grid.require_same(self.lower.grid, "band curves")
        self.center.grid.require_same(self.upper.grid, "band curves")
        if np.any(self.lower.values > self.upper.values):
            raise DataError("band lower curve exceeds upper curve")
        if not 0.0 < self.level < 1.0:
            raise DataError(f"band level must be in (0, 1), got {self.level}")

    def half_width(self) -> np.ndarray:
        return (self.upper.values - self.lower.values) / 2.0

    def excludes_zero_fraction(self) -> float:
        """Trapezoid-weighted fraction of the domain where the band excludes 0."""
        outside = (self.lower.values > 0.0) | (self.upper.values < 0.0)
        return trapezoid_integrate(Curve(self.center.grid, outside.astype(float)))


def estimate_sigma(infl: InfluenceMatrix) -> CovEstimate:
    """Empirical covariance of the influence rows, with divisor n.

    The input must be centered; the result is then a Gram matrix of centered
    rows and positive semidefinite by construction.
    """
    if not infl.centered:
        raise DataError("influence matrix must be centered before covariance estimation")
    n = infl.n
    if n == 0:
        raise DataError("influence matrix has no rows")
    entries = infl.values.T @ infl.values / n
    return CovEstimate(cov=CovarianceMatrix(grid=infl.grid, entries=entries), n=n)


def _floored_sigma(sigma: CovEstimate) -> np.ndarray:
    sd = sigma.sigma_hat()
    top = float(sd.max())
    if top <= 0.0:
        # fully degenerate covariance: fall back to an absolute floor
        return np.full_like(sd, np.finfo(float).tiny ** 0.5)
    return np.maximum(sd, SIGMA_FLOOR_REL * top)


def supt_band(
    beta_hat: Curve,
    sigma: CovEstimate,
    level: float = 0.95,
    draws: int = DEFAULT_BAND_DRAWS,
    rng: np.random.Generator | None = None,
) -> ConfidenceBand:
    """Simultaneous band calibrated by the bootstrap max-statistic.

    Draws centered Gaussian curves with covariance sigma, records each draw's
    maximum studentized absolute value, and widens the pointwise normal band
    until the whole curve is covered with the requested probability:

        band = beta_hat +/- q * sigma_hat / sqrt(n)

    with q the empirical level-quantile of the max statistic.
    """
    if draws < 100:
        raise DataError(f"need at least 100 bootstrap draws, got {draws}")
    if rng is None:
        rng = np.random.default_rng()
    beta_hat.grid.require_same(sigma.grid, "estimate and covariance")
    sd = _floored_sigma(sigma)
    factor = factor_psd(sigma.cov)
    z = rng.standard_normal((int(draws), sigma.grid.m))
    paths = z @ factor.matrix.T
    max_stats = np.max(np.abs(paths) / sd, axis=1)
    q = float(np.quantile(max_stats, level))
    half = q * sd / np.sqrt(sigma.n)
    return ConfidenceBand(
        center=beta_hat,
        lower=Curve(beta_hat.grid, beta_hat.values - half),
        upper=Curve(beta_hat.grid, beta_hat.values + half),
        level=level,
        calibration=q,
        draws=int(draws),
    )


def pointwise_band(beta_hat: Curve, sigma: CovEstimate, level: float = 0.95) -> ConfidenceBand:
    """Per-point normal band; diagnostic only, no simultaneous guarantee."""
    beta_hat.grid.require_same(sigma.grid, "estimate and covariance")
    z = float(stats.norm.ppf(0.5 + level / 2.0))
    sd = _floored_sigma(sigma)
    half = z * sd / np.sqrt(sigma.n)
    return ConfidenceBand(
        center=beta_hat,
        lower=Curve(beta_hat.grid, beta_hat.values - half),
        upper=Curve(beta_hat.grid, beta_hat.values + half),
        level=level,
        calibration=z,
        draws=0,
    )


def coverage_delta(truth: Curve, band: ConfidenceBand) -> float:
    """Fraction of the domain where the true curve lies inside the band.

    Computed as the trapezoid integral of the pointwise inside indicator, so
    the value is a length fraction in [0, 1]; 1 means the whole curve is
    covered.
    """
    truth.grid.require_same(band.center.grid, "truth and band")
    inside = (truth.values >= band.lower.values) & (truth.values <= band.upper.values)
    return trapezoid_integrate(Curve(truth.grid, inside.astype(float)))
