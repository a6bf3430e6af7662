"""Matérn covariance kernels and Gaussian-process sampling on a grid.

Smoothness is restricted to the half-integer family, where the kernel is an
exponential times a low-order polynomial in the scaled distance. General
smoothness via Bessel functions is a deliberate extension point, not shipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, IndefiniteMatrixError
from .fda import Curve, TimeGrid

__all__ = [
    "MaternParams",
    "CovarianceMatrix",
    "LowerTriangularFactor",
    "matern_cov",
    "build_cov_matrix",
    "factor_psd",
    "sample_gp",
]

SUPPORTED_SMOOTHNESS = (0.5, 1.5, 2.5, 3.5)

#: Jitter ladder: delta in {0} then jitter_start * 4**k for k = 0..10.
JITTER_STEPS = 10
JITTER_GROWTH = 4.0
DEFAULT_JITTER_SCALE = 1e-10  # of trace/m


@dataclass(frozen=True)
class MaternParams:
    """Matérn kernel parameters: marginal variance, smoothness, length scale."""

    variance: float
    smoothness: float
    length_scale: float

    def __post_init__(self):
        if not (self.variance > 0 and self.smoothness > 0 and self.length_scale > 0):
            raise DataError(
                "Matérn parameters must be strictly positive, got "
                f"variance={self.variance}, smoothness={self.smoothness}, "
                f"length_scale={self.length_scale}"
            )
        if self.smoothness not in SUPPORTED_SMOOTHNESS:
            raise DataError(
                f"smoothness {self.smoothness} unsupported; "
                f"use one of {SUPPORTED_SMOOTHNESS}"
            )


def _matern_shape(scaled: np.ndarray, smoothness: float) -> np.ndarray:
    """Unit-variance kernel value as a function of sqrt(2*nu)*|s-t|/l."""
    if smoothness == 0.5:
        poly = 1.0
    elif smoothness == 1.5:
        poly = 1.0 + scaled
    elif smoothness == 2.5:
        poly = 1.0 + scaled + scaled**2 / 3.0
    elif smoothness == 3.5:
        poly = 1.0 + scaled + 2.0 * scaled**2 / 5.0 + scaled**3 / 15.0
    else:  # pragma: no cover - guarded by MaternParams
        raise DataError(f"smoothness {smoothness} unsupported")
    return poly * np.exp(-scaled)


def matern_cov(s: float, t: float, p: MaternParams) -> float:
    """Matérn kernel value between times s and t."""
    d = abs(s - t)
    scaled = math.sqrt(2.0 * p.smoothness) * d / p.length_scale
    return p.variance * float(_matern_shape(np.asarray(scaled), p.smoothness))


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Symmetric covariance matrix aligned with a TimeGrid."""

    grid: TimeGrid
    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        m = self.grid.m
        if e.shape != (m, m):
            raise DataError(f"covariance must be ({m}, {m}), got {e.shape}")
        if not np.all(np.isfinite(e)):
            raise DataError("covariance entries must be finite")
        asym = float(np.max(np.abs(e - e.T))) if m else 0.0
        if asym > 1e-12 * max(1.0, float(np.max(np.abs(e)))):
            raise DataError(f"covariance not symmetric (max asymmetry {asym:.3e})")
        if np.any(np.diag(e) < 0):
            raise DataError("covariance has negative diagonal entries")
        sym = (e + e.T) / 2.0
        sym.flags.writeable = False
        object.__setattr__(self, "entries", sym)

    @property
    def m(self) -> int:
        return self.grid.m

    def diagonal(self) -> np.ndarray:
        return np.diag(self.entries).copy()


def build_cov_matrix(grid: TimeGrid, p: MaternParams) -> CovarianceMatrix:
    """Evaluate the Matérn kernel on all grid pairs."""
    t = grid.points
    d = np.abs(t[:, None] - t[None, :])
    scaled = math.sqrt(2.0 * p.smoothness) / p.length_scale * d
    entries = p.variance * _matern_shape(scaled, p.smoothness)
    return CovarianceMatrix(grid=grid, entries=entries)


@dataclass(frozen=True, eq=False)
class LowerTriangularFactor:
    """Cholesky-type factor L with L @ L.T = entries + jitter * I."""

    grid: TimeGrid
    matrix: np.ndarray
    jitter: float

    @property
    def m(self) -> int:
        return self.grid.m


def factor_psd(
    cov: CovarianceMatrix, jitter_start: float | None = None
) -> LowerTriangularFactor:
    """Factor a (nearly) PSD covariance, escalating diagonal jitter on failure.

    The jitter ladder is 0, then jitter_start * 4**k for k = 0..10, with
    jitter_start defaulting to 1e-10 * trace/m. The applied jitter is recorded
    on the returned factor. Raises IndefiniteMatrixError if the ladder is
    exhausted, which for the default ladder means the matrix has a genuinely
    negative eigenvalue rather than rounding-level rank deficiency.
    """
    a = cov.entries
    m = cov.m
    scale = float(np.trace(a)) / m if m else 0.0
    if jitter_start is None:
        jitter_start = DEFAULT_JITTER_SCALE * max(scale, np.finfo(float).tiny)
    deltas = [0.0] + [jitter_start * JITTER_GROWTH**k for k in range(JITTER_STEPS + 1)]
    for delta in deltas:
        try:
            chol = np.linalg.cholesky(a + delta * np.eye(m))
        except np.linalg.LinAlgError:
            continue
        return LowerTriangularFactor(grid=cov.grid, matrix=chol, jitter=delta)
    raise IndefiniteMatrixError(
        f"covariance is not positive semidefinite: factorization failed at "
        f"maximum jitter {deltas[-1]:.3e} (trace/m = {scale:.3e})"
    )


def sample_gp(
    factor: LowerTriangularFactor,
    rng: np.random.Generator,
    mean: Curve | None = None,
    size: int | None = None,
) -> Curve | np.ndarray:
    """Draw from the Gaussian process with the factored covariance.

    With size=None returns a single Curve; with an integer size returns a
    (size, m) matrix whose rows are draws. Deterministic given the rng state.
    """
    m = factor.m
    if mean is not None:
        factor.grid.require_same(mean.grid, "factor and mean curve")
        mu = mean.values
    else:
        mu = 0.0
    if size is None:
        z = rng.standard_normal(m)
        return Curve(factor.grid, mu + factor.matrix @ z)
    z = rng.standard_normal((int(size), m))
    return mu + z @ factor.matrix.T
