"""Nuisance estimation: propensity scores and outcome regressions.

Two families live here. The fitted models (logistic regression via IRLS,
function-on-scalar least squares) are what a real analysis uses. The
corruption models blend the true nuisance values with exogenous random draws
and exist so benchmark scenarios can dial misspecification up and down
without involving an actual fitting procedure.

All fit functions take a training set and predict on whatever evaluation set
they are handed, so out-of-fold prediction needs no special casing.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    DataError,
    SeparationError,
    SingularDesignError,
)
from .fda import Curve, TimeGrid
from .randproc import LowerTriangularFactor, MaternParams, sample_gp

__all__ = [
    "PropensityModel",
    "OutcomeModel",
    "NuisanceModelSpec",
    "PropensityFit",
    "OutcomeFit",
    "LogisticFit",
    "FosOlsFit",
    "fit_logistic",
    "predict_propensity",
    "fit_fos_ols",
    "predict_fos",
    "corrupt_propensity",
    "corrupt_outcome",
    "sample_truncated_mixture",
    "distort_features",
    "clip_propensity",
    "FeatureSet",
    "OUTCOME_CORRUPTION_KERNEL",
    "DEFAULT_CLIP_BOUND",
]

DEFAULT_CLIP_BOUND = 0.02

# Balanced two-component normal mixture used by the propensity corruption:
# means 0.2 / 0.8, common sd 0.1, truncated to [0.02, 0.98].
MIXTURE_MEANS = (0.2, 0.8)
MIXTURE_SD = 0.1
MIXTURE_BOUNDS = (0.02, 0.98)


class PropensityModel(str, enum.Enum):
    LOGISTIC = "logistic"
    ORACLE_CORRUPTED = "oracle_corrupted"
    CONSTANT = "constant"


class OutcomeModel(str, enum.Enum):
    FOS_OLS = "fos_ols"
    ORACLE_CORRUPTED = "oracle_corrupted"
    ZERO = "zero"


class FeatureSet(str, enum.Enum):
    """Which covariate view a nuisance model is fit on."""

    RAW = "raw"
    DISTORTED = "distorted"


@dataclass(frozen=True)
class NuisanceModelSpec:
    """Configuration for how both nuisances are produced.

    alpha_pi / alpha_mu only apply to the corruption models; the feature-set
    switches only apply to the fitted models.
    """

    propensity_model: PropensityModel = PropensityModel.LOGISTIC
    outcome_model: OutcomeModel = OutcomeModel.FOS_OLS
    clip_bound: float = DEFAULT_CLIP_BOUND
    alpha_pi: float = 0.0
    alpha_mu: float = 0.0
    propensity_features: FeatureSet = FeatureSet.RAW
    outcome_features: FeatureSet = FeatureSet.RAW

    def __post_init__(self):
        # accept plain strings for the enum fields
        object.__setattr__(self, "propensity_model", PropensityModel(self.propensity_model))
        object.__setattr__(self, "outcome_model", OutcomeModel(self.outcome_model))
        object.__setattr__(self, "propensity_features", FeatureSet(self.propensity_features))
        object.__setattr__(self, "outcome_features", FeatureSet(self.outcome_features))
        if not 0.0 < self.clip_bound < 0.5:
            raise DataError(f"clip_bound must be in (0, 0.5), got {self.clip_bound}")
        for name, a in (("alpha_pi", self.alpha_pi), ("alpha_mu", self.alpha_mu)):
            if not 0.0 <= a <= 1.0:
                raise DataError(f"{name} must be in [0, 1], got {a}")


@dataclass(frozen=True, eq=False)
class PropensityFit:
    """Per-unit treatment probabilities, clipped into [clip_bound, 1 - clip_bound]."""

    values: np.ndarray
    clip_bound: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if not 0.0 < self.clip_bound < 0.5:
            raise DataError(f"clip_bound must be in (0, 0.5), got {self.clip_bound}")
        if v.size and (v.min() < self.clip_bound or v.max() > 1.0 - self.clip_bound):
            raise DataError(
                f"propensity values must lie in [{self.clip_bound}, {1 - self.clip_bound}]; "
                f"range is [{v.min():.6g}, {v.max():.6g}]"
            )
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    def control_values(self) -> np.ndarray:
        """Probabilities of the control arm, 1 - pi_hat."""
        return 1.0 - self.values


@dataclass(frozen=True, eq=False)
class OutcomeFit:
    """Predicted outcome curves for both arms, one row per unit."""

    grid: TimeGrid
    mu0: np.ndarray  # (n, m)
    mu1: np.ndarray  # (n, m)

    def __post_init__(self):
        mu0 = np.asarray(self.mu0, dtype=np.float64)
        mu1 = np.asarray(self.mu1, dtype=np.float64)
        if mu0.ndim != 2 or mu0.shape[1] != self.grid.m or mu1.shape != mu0.shape:
            raise DataError(
                f"outcome fits must both be (n, {self.grid.m}); "
                f"got {mu0.shape} and {mu1.shape}"
            )
        if not (np.all(np.isfinite(mu0)) and np.all(np.isfinite(mu1))):
            raise DataError("outcome fit values must be finite")
        for name, arr in (("mu0", mu0), ("mu1", mu1)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.mu0.shape[0]

    def mu(self, arm: int) -> np.ndarray:
        return self.mu1 if arm == 1 else self.mu0


# --- logistic regression via IRLS --------------------------------------------


@dataclass(frozen=True)
class LogisticFit:
    """Logistic regression coefficients (intercept first) with fit diagnostics."""

    coefficients: np.ndarray
    converged: bool
    iterations: int

    def linear_predictor(self, covariates: np.ndarray) -> np.ndarray:
        x = np.asarray(covariates, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.coefficients.size - 1:
            raise DataError(
                f"covariates must be (n, {self.coefficients.size - 1}), got {x.shape}"
            )
        return self.coefficients[0] + x @ self.coefficients[1:]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _log_likelihood(y: np.ndarray, eta: np.ndarray) -> float:
    # sum y*eta - log(1 + exp(eta)), evaluated stably
    return float(y @ eta - np.logaddexp(0.0, eta).sum())


def fit_logistic(
    train_covariates: np.ndarray,
    train_treatment: np.ndarray,
    max_iter: int = 100,
    tol: float = 1e-8,
    ridge: float = 0.0,
) -> LogisticFit:
    """Maximum-likelihood logistic regression by iteratively reweighted least squares.

    An intercept column is prepended internally; coefficients come back with
    the intercept first. Newton steps are halved when the likelihood would
    decrease. Convergence is declared when the largest absolute coefficient
    update falls below tol. A small ridge penalty can be supplied to tame
    separation; by default the fit is plain MLE and separation raises.
    """
    x = np.asarray(train_covariates, dtype=np.float64)
    y = np.asarray(train_treatment, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[0] != y.size:
        raise DataError(f"covariates {x.shape} do not match {y.size} treatment flags")
    if not (np.any(y == 1) and np.any(y == 0)):
        raise DataError("logistic training data must contain both treatment arms")
    n = y.size
    design = np.hstack([np.ones((n, 1)), x])
    k = design.shape[1]
    coef = np.zeros(k)
    eta = design @ coef
    loglik = _log_likelihood(y, eta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        prob = _sigmoid(eta)
        w = prob * (1.0 - prob)
        grad = design.T @ (y - prob) - ridge * coef
        hess = design.T @ (design * w[:, None]) + ridge * np.eye(k)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            raise SingularDesignError(
                "weighted design is singular in IRLS; check for collinear "
                "covariates or add a ridge penalty"
            ) from None
        # backtrack until the penalized likelihood does not decrease
        scale = 1.0
        for _ in range(30):
            cand = coef + scale * step
            cand_eta = design @ cand
            cand_ll = _log_likelihood(y, cand_eta) - 0.5 * ridge * float(cand @ cand)
            if cand_ll >= loglik - 1e-12 * abs(loglik):
                break
            scale /= 2.0
        else:
            if float(np.max(np.abs(eta))) > 30.0:
                # odds saturated and still climbing: the arms are separated
                raise SeparationError(
                    "logistic fit diverged, which indicates (quasi-)separated "
                    "arms; clip covariates or pass ridge > 0"
                )
            raise ConvergenceError("IRLS step halving failed to improve the likelihood")
        coef, eta, loglik = cand, cand_eta, cand_ll
        if float(np.max(np.abs(scale * step))) < tol:
            converged = True
            break
        if ridge == 0.0 and float(np.max(np.abs(eta))) > 300.0:
            raise SeparationError(
                "logistic coefficients are diverging, which indicates separated "
                "arms; clip covariates or pass ridge > 0"
            )
    return LogisticFit(coefficients=coef, converged=converged, iterations=it)


def clip_propensity(values: np.ndarray, clip_bound: float) -> np.ndarray:
    return np.clip(values, clip_bound, 1.0 - clip_bound)


def predict_propensity(
    fit: LogisticFit, covariates: np.ndarray, clip_bound: float = DEFAULT_CLIP_BOUND
) -> PropensityFit:
    """Apply the logistic transform to the linear predictor, then clip."""
    probs = _sigmoid(fit.linear_predictor(covariates))
    return PropensityFit(values=clip_propensity(probs, clip_bound), clip_bound=clip_bound)


# --- function-on-scalar least squares ----------------------------------------


@dataclass(frozen=True, eq=False)
class FosOlsFit:
    """Coefficient curves of a pointwise least-squares fit, intercept row first."""

    grid: TimeGrid
    coefficients: np.ndarray  # (p + 1, m)
    condition_number: float


def fit_fos_ols(
    train_covariates: np.ndarray,
    train_outcomes: np.ndarray,
    grid: TimeGrid,
    cond_limit: float = 1e12,
) -> FosOlsFit:
    """Least-squares coefficient curves, solved jointly across all grid points.

    The normal-equations matrix is factorized once and reused for every grid
    point, which is what makes the pointwise fit cheap. An intercept column
    is prepended internally.
    """
    x = np.asarray(train_covariates, dtype=np.float64)
    y = np.asarray(train_outcomes, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DataError(f"covariates {x.shape} do not match outcomes {y.shape}")
    if y.shape[1] != grid.m:
        raise DataError(f"outcomes have {y.shape[1]} columns, grid has {grid.m}")
    n = x.shape[0]
    design = np.hstack([np.ones((n, 1)), x])
    k = design.shape[1]
    if n <= k - 1:
        raise DataError(
            f"need more training rows than covariates: n={n}, p={k - 1}"
        )
    gram = design.T @ design
    cond = float(np.linalg.cond(gram))
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularDesignError(
            f"design is rank deficient: cond(X'X) = {cond:.3e} exceeds {cond_limit:.1e}"
        )
    theta = np.linalg.solve(gram, design.T @ y)  # (k, m), all grid points at once
    return FosOlsFit(grid=grid, coefficients=theta, condition_number=cond)


def predict_fos(fit: FosOlsFit, covariates: np.ndarray) -> np.ndarray:
    """Predicted curves, one row per unit: x_i dotted with the coefficient curves."""
    x = np.asarray(covariates, dtype=np.float64)
    k = fit.coefficients.shape[0]
    if x.ndim != 2 or x.shape[1] != k - 1:
        raise DataError(f"covariates must be (n, {k - 1}), got {x.shape}")
    design = np.hstack([np.ones((x.shape[0], 1)), x])
    return design @ fit.coefficients


# --- corruption models --------------------------------------------------------


def sample_truncated_mixture(rng: np.random.Generator, size: int | None = None) -> float | np.ndarray:
    """Draw from the balanced 0.2/0.8 normal mixture truncated to [0.02, 0.98].

    Sampling is by rejection; nearly all mass is inside the interval, so the
    resample loop is cheap.
    """
    scalar = size is None
    want = 1 if scalar else int(size)
    lo, hi = MIXTURE_BOUNDS
    out = np.empty(want)
    filled = 0
    while filled < want:
        need = want - filled
        means = np.where(rng.random(need) < 0.5, MIXTURE_MEANS[0], MIXTURE_MEANS[1])
        draws = rng.normal(means, MIXTURE_SD)
        ok = (draws >= lo) & (draws <= hi)
        take = int(ok.sum())
        out[filled : filled + take] = draws[ok]
        filled += take
    return float(out[0]) if scalar else out


def corrupt_propensity(true_p: float, alpha_pi: float, rng: np.random.Generator) -> float:
    """Blend a truncated-mixture draw with the true propensity.

    alpha_pi = 0 returns the truth exactly; alpha_pi = 1 is a pure mixture
    draw; anything between is the convex combination.
    """
    if not 0.0 <= alpha_pi <= 1.0:
        raise DataError(f"alpha_pi must be in [0, 1], got {alpha_pi}")
    if alpha_pi == 0.0:
        return float(true_p)
    u = sample_truncated_mixture(rng)
    return float(alpha_pi * u + (1.0 - alpha_pi) * true_p)


def corrupt_outcome(
    true_mu: Curve,
    alpha_mu: float,
    noise_factor: LowerTriangularFactor,
    rng: np.random.Generator,
) -> Curve:
    """Blend a Gaussian-process draw with the true regression curve pointwise."""
    if not 0.0 <= alpha_mu <= 1.0:
        raise DataError(f"alpha_mu must be in [0, 1], got {alpha_mu}")
    true_mu.grid.require_same(noise_factor.grid, "curve and noise factor")
    if alpha_mu == 0.0:
        return true_mu
    draw = sample_gp(noise_factor, rng)
    return Curve(true_mu.grid, alpha_mu * draw.values + (1.0 - alpha_mu) * true_mu.values)


#: Matérn parameters of the corruption process for outcome regressions.
OUTCOME_CORRUPTION_KERNEL = MaternParams(variance=1.0, smoothness=2.5, length_scale=0.25)


def distort_features(covariates: np.ndarray) -> np.ndarray:
    """Nonlinear 3-feature view of a >= 4 column covariate matrix.

    Columns: sin of the first covariate, squared sum of the second and third,
    log(1 + |fourth|). Used to fit deliberately misspecified nuisances.
    """
    x = np.asarray(covariates, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 4:
        raise DataError(f"feature distortion needs at least 4 covariates, got shape {x.shape}")
    return np.column_stack(
        [
            np.sin(x[:, 0]),
            (x[:, 1] + x[:, 2]) ** 2,
            np.log1p(np.abs(x[:, 3])),
        ]
    )
