"""Estimators of the functional average treatment effect.

Three estimators of the mean treated-minus-control outcome curve:

* outcome regression (OR): average the predicted arm difference,
* inverse probability weighting (IPW): reweight observed outcomes by the
  (estimated) treatment probabilities,
* doubly robust (DR): augment the outcome-regression prediction with an
  inverse-probability-weighted residual correction, so the estimate stays
  consistent when either nuisance model (not necessarily both) is correct.

The DR estimator's per-unit contributions, re-centered at the estimate,
form the influence matrix that downstream inference builds its covariance
estimate and confidence bands from. Cross-fitting trains the nuisances on
out-of-fold data so the same sample can be used for evaluation without
overfitting bias.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .fda import Curve, ObservationalDataset, TimeGrid
from .nuisance import (
    FeatureSet,
    NuisanceModelSpec,
    OutcomeFit,
    OutcomeModel,
    PropensityFit,
    PropensityModel,
    clip_propensity,
    distort_features,
    fit_fos_ols,
    fit_logistic,
    predict_fos,
    predict_propensity,
)

__all__ = [
    "Method",
    "FateEstimate",
    "InfluenceMatrix",
    "FoldAssignment",
    "CrossFitNuisances",
    "estimate_or",
    "estimate_ipw",
    "case_corrected",
    "estimate_dr_onefold",
    "make_folds",
    "crossfit_nuisances",
    "estimate_dr_crossfit",
]


class Method(str, enum.Enum):
    OR = "or"
    IPW = "ipw"
    DR = "dr"


@dataclass(frozen=True, eq=False)
class FateEstimate:
    """An estimated treatment-effect curve plus how it was produced."""

    beta_hat: Curve
    method: Method
    n_used: int
    folds: int = 1


@dataclass(frozen=True, eq=False)
class InfluenceMatrix:
    """Evaluated per-unit influence contributions, one row per unit.

    Rows are the case-corrected arm differences minus the centering curve.
    When centered at the global estimate, column means vanish: exactly for a
    single fold, and to rounding error for cross-fitting with balanced folds.
    """

    grid: TimeGrid
    values: np.ndarray  # (n, m)
    centered: bool

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != self.grid.m:
            raise DataError(f"influence matrix must be (n, {self.grid.m}), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("influence values must be finite")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _require_fit_sizes(dataset: ObservationalDataset, outcome_fit: OutcomeFit | None,
                       propensity_fit: PropensityFit | None) -> None:
    if outcome_fit is not None:
        dataset.grid.require_same(outcome_fit.grid, "dataset and outcome fit")
        if outcome_fit.n != dataset.n:
            raise DataError(f"outcome fit covers {outcome_fit.n} units, dataset has {dataset.n}")
    if propensity_fit is not None and propensity_fit.n != dataset.n:
        raise DataError(
            f"propensity fit covers {propensity_fit.n} units, dataset has {dataset.n}"
        )


def _require_both_arms(dataset: ObservationalDataset, method: str) -> None:
    n0, n1 = dataset.arm_counts()
    if n0 == 0 or n1 == 0:
        raise DataError(
            f"{method} requires both treatment arms; "
            f"dataset has {n1} treated and {n0} control units"
        )


def estimate_or(outcome_fit: OutcomeFit) -> FateEstimate:
    """Outcome-regression estimate: mean over units of mu1_hat - mu0_hat."""
    beta = (outcome_fit.mu1 - outcome_fit.mu0).mean(axis=0)
    return FateEstimate(
        beta_hat=Curve(outcome_fit.grid, beta),
        method=Method.OR,
        n_used=outcome_fit.n,
    )


def _ipw_rows(dataset: ObservationalDataset, propensity_fit: PropensityFit) -> np.ndarray:
    a = dataset.treatment.astype(np.float64)
    pi1 = propensity_fit.values
    w = a / pi1 - (1.0 - a) / (1.0 - pi1)
    return w[:, None] * dataset.outcomes


def estimate_ipw(dataset: ObservationalDataset, propensity_fit: PropensityFit) -> FateEstimate:
    """Inverse-probability-weighted estimate of the effect curve.

    Positivity is guaranteed upstream: PropensityFit values are clipped away
    from 0 and 1 at construction.
    """
    _require_fit_sizes(dataset, None, propensity_fit)
    _require_both_arms(dataset, "the IPW estimator")
    beta = _ipw_rows(dataset, propensity_fit).mean(axis=0)
    return FateEstimate(
        beta_hat=Curve(dataset.grid, beta), method=Method.IPW, n_used=dataset.n
    )


def case_corrected(
    dataset: ObservationalDataset,
    outcome_fit: OutcomeFit,
    propensity_fit: PropensityFit,
    arm: int,
) -> np.ndarray:
    """Case-corrected regression curves for one arm, one row per unit.

    For units observed in the requested arm the model prediction is corrected
    by the inverse-probability-weighted residual; for the others it is the
    bare prediction:

        mu_hat(X_i) + 1{A_i = arm} * (Y_i - mu_hat(X_i)) / p_hat_arm(X_i)

    where p_hat_arm is the fitted probability of being in that arm.
    """
    if arm not in (0, 1):
        raise DataError(f"arm must be 0 or 1, got {arm}")
    _require_fit_sizes(dataset, outcome_fit, propensity_fit)
    mu = outcome_fit.mu(arm)
    in_arm = (dataset.treatment == arm).astype(np.float64)
    p_arm = propensity_fit.values if arm == 1 else propensity_fit.control_values()
    resid = dataset.outcomes - mu
    return mu + (in_arm / p_arm)[:, None] * resid


def estimate_dr_onefold(
    dataset_eval: ObservationalDataset,
    outcome_fit: OutcomeFit,
    propensity_fit: PropensityFit,
) -> tuple[FateEstimate, InfluenceMatrix]:
    """Doubly robust estimate on one evaluation set.

    The caller is responsible for training the supplied fits on data disjoint
    from dataset_eval (the cross-fitting driver enforces this); with exogenous
    nuisance values the point is moot. Returns the estimate together with the
    influence matrix, whose rows are the per-unit case-corrected differences
    centered at the estimate.
    """
    _require_fit_sizes(dataset_eval, outcome_fit, propensity_fit)
    gamma_diff = case_corrected(dataset_eval, outcome_fit, propensity_fit, 1) - case_corrected(
        dataset_eval, outcome_fit, propensity_fit, 0
    )
    beta = gamma_diff.mean(axis=0)
    estimate = FateEstimate(
        beta_hat=Curve(dataset_eval.grid, beta),
        method=Method.DR,
        n_used=dataset_eval.n,
    )
    infl = InfluenceMatrix(grid=dataset_eval.grid, values=gamma_diff - beta, centered=True)
    return estimate, infl


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    """Partition of n units into folds 1..J with sizes differing by at most one."""

    fold_of: np.ndarray  # (n,) values in 1..J
    folds: int

    def __post_init__(self):
        f = np.asarray(self.fold_of, dtype=np.int64)
        if f.ndim != 1 or self.folds < 1:
            raise DataError("fold assignment must be a 1-d array with folds >= 1")
        if f.size and (f.min() < 1 or f.max() > self.folds):
            raise DataError(f"fold labels must lie in 1..{self.folds}")
        sizes = np.bincount(f, minlength=self.folds + 1)[1:]
        if sizes.max() - sizes.min() > 1:
            raise DataError(f"fold sizes {sizes.tolist()} differ by more than one")
        f = f.copy()
        f.flags.writeable = False
        object.__setattr__(self, "fold_of", f)

    @property
    def n(self) -> int:
        return self.fold_of.size

    def members(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == j)


def make_folds(n: int, folds: int, rng: np.random.Generator) -> FoldAssignment:
    """Uniformly random partition into folds of size floor(n/J) or ceil(n/J).

    When n is not divisible by J, the leftover units land one per fold in the
    first n mod J folds (after shuffling, so membership is still uniform).
    """
    if not 2 <= folds <= n:
        raise DataError(f"folds must satisfy 2 <= J <= n, got J={folds}, n={n}")
    perm = rng.permutation(n)
    base = n // folds
    extra = n % folds
    labels = np.empty(n, dtype=np.int64)
    start = 0
    for j in range(1, folds + 1):
        size = base + (1 if j <= extra else 0)
        labels[perm[start : start + size]] = j
        start += size
    return FoldAssignment(fold_of=labels, folds=folds)


@dataclass(frozen=True, eq=False)
class CrossFitNuisances:
    """Out-of-fold nuisance values for every unit, plus the fold layout."""

    propensity: PropensityFit
    outcomes: OutcomeFit
    fold_assignment: FoldAssignment


def _nuisance_features(covariates: np.ndarray, which: FeatureSet) -> np.ndarray:
    if which is FeatureSet.DISTORTED:
        return distort_features(covariates)
    return covariates


def crossfit_nuisances(
    dataset: ObservationalDataset,
    spec: NuisanceModelSpec,
    folds: int,
    rng: np.random.Generator,
) -> CrossFitNuisances:
    """Fit both nuisances out-of-fold and evaluate them on the held-out units.

    Each fold's nuisances are trained on the complement of the fold and used
    only to predict inside it, so every unit's values come from models that
    never saw it. The training complement must contain both treatment arms.
    """
    if spec.propensity_model is PropensityModel.ORACLE_CORRUPTED or (
        spec.outcome_model is OutcomeModel.ORACLE_CORRUPTED
    ):
        raise DataError(
            "corrupted nuisance values are exogenous inputs; cross-fitting only "
            "applies to fitted models"
        )
    _require_both_arms(dataset, "cross-fitting")
    assignment = make_folds(dataset.n, folds, rng)
    n, m = dataset.n, dataset.grid.m
    pi = np.empty(n)
    mu0 = np.zeros((n, m))
    mu1 = np.zeros((n, m))
    x_pi = _nuisance_features(dataset.covariates, spec.propensity_features)
    x_mu = _nuisance_features(dataset.covariates, spec.outcome_features)
    a = dataset.treatment
    for j in range(1, folds + 1):
        hold = assignment.members(j)
        train = np.flatnonzero(assignment.fold_of != j)
        a_train = a[train]
        if not (np.any(a_train == 1) and np.any(a_train == 0)):
            raise DataError(
                f"training complement of fold {j} lacks a treatment arm; "
                "use fewer folds or more data"
            )
        if spec.propensity_model is PropensityModel.LOGISTIC:
            fit = fit_logistic(x_pi[train], a_train)
            pi[hold] = predict_propensity(fit, x_pi[hold], spec.clip_bound).values
        elif spec.propensity_model is PropensityModel.CONSTANT:
            pi[hold] = clip_propensity(a_train.mean(), spec.clip_bound)
        else:  # pragma: no cover - rejected above
            raise DataError(f"unsupported propensity model {spec.propensity_model}")
        if spec.outcome_model is OutcomeModel.FOS_OLS:
            for arm, target in ((0, mu0), (1, mu1)):
                arm_rows = train[a_train == arm]
                fit = fit_fos_ols(x_mu[arm_rows], dataset.outcomes[arm_rows], dataset.grid)
                target[hold] = predict_fos(fit, x_mu[hold])
        elif spec.outcome_model is OutcomeModel.ZERO:
            pass  # mu0, mu1 stay zero
        else:  # pragma: no cover - rejected above
            raise DataError(f"unsupported outcome model {spec.outcome_model}")
    return CrossFitNuisances(
        propensity=PropensityFit(values=pi, clip_bound=spec.clip_bound),
        outcomes=OutcomeFit(grid=dataset.grid, mu0=mu0, mu1=mu1),
        fold_assignment=assignment,
    )


def estimate_dr_crossfit(
    dataset: ObservationalDataset,
    spec: NuisanceModelSpec,
    folds: int,
    rng: np.random.Generator,
    nuisances: CrossFitNuisances | None = None,
) -> tuple[FateEstimate, InfluenceMatrix]:
    """Cross-fitted doubly robust estimate.

    Per-fold estimates (each using that fold's out-of-fold nuisances) are
    averaged with equal weights. Influence rows are computed for all n units
    with their own fold-excluded nuisances and centered at the pooled
    estimate, not the per-fold one, which keeps the empirical covariance of
    the rows positive semidefinite by construction. Precomputed nuisances can
    be passed in to share them with the single-model estimators.
    """
    if nuisances is None:
        nuisances = crossfit_nuisances(dataset, spec, folds, rng)
    assignment = nuisances.fold_assignment
    gamma_diff = case_corrected(dataset, nuisances.outcomes, nuisances.propensity, 1) - (
        case_corrected(dataset, nuisances.outcomes, nuisances.propensity, 0)
    )
    fold_means = np.vstack(
        [gamma_diff[assignment.members(j)].mean(axis=0) for j in range(1, assignment.folds + 1)]
    )
    beta = fold_means.mean(axis=0)
    estimate = FateEstimate(
        beta_hat=Curve(dataset.grid, beta),
        method=Method.DR,
        n_used=dataset.n,
        folds=assignment.folds,
    )
    infl = InfluenceMatrix(grid=dataset.grid, values=gamma_diff - beta, centered=True)
    return estimate, infl
