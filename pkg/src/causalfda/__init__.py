"""Doubly robust estimation of functional average treatment effects.

Outcomes are curves sampled on a shared grid over [0, 1]. The package
provides the outcome-regression, inverse-probability-weighting, and doubly
robust effect estimators, cross-fitted nuisance estimation, influence-based
covariance estimation with simultaneous confidence bands, and a seeded
Monte Carlo lab for benchmarking the estimators under controlled nuisance
misspecification.
"""

__version__ = "0.1.0"

from .errors import (
    CausalfdaError,
    ConvergenceError,
    DataError,
    GridMismatchError,
    IndefiniteMatrixError,
    NumericsError,
    SeparationError,
    SingularDesignError,
)
from .fda import (
    Curve,
    ObservationalDataset,
    TimeGrid,
    l2_distance_sq,
    load_dataset,
    sup_norm,
    trapezoid_integrate,
    uniform_grid,
    write_dataset,
)
from .randproc import (
    CovarianceMatrix,
    LowerTriangularFactor,
    MaternParams,
    build_cov_matrix,
    factor_psd,
    matern_cov,
    sample_gp,
)
from .nuisance import (
    FeatureSet,
    LogisticFit,
    FosOlsFit,
    NuisanceModelSpec,
    OutcomeFit,
    OutcomeModel,
    PropensityFit,
    PropensityModel,
    corrupt_outcome,
    corrupt_propensity,
    distort_features,
    fit_fos_ols,
    fit_logistic,
    predict_fos,
    predict_propensity,
    sample_truncated_mixture,
)
from .estimators import (
    CrossFitNuisances,
    FateEstimate,
    FoldAssignment,
    InfluenceMatrix,
    Method,
    case_corrected,
    crossfit_nuisances,
    estimate_dr_crossfit,
    estimate_dr_onefold,
    estimate_ipw,
    estimate_or,
    make_folds,
)
from .inference import (
    ConfidenceBand,
    CovEstimate,
    coverage_delta,
    estimate_sigma,
    pointwise_band,
    supt_band,
)
from .simlab import (
    GridRunResult,
    LinearDgpConfig,
    MaternDgpConfig,
    NoiseVarianceRule,
    ReplicateResult,
    Scenario,
    gen_linear_dgp,
    gen_matern_dgp,
    run_replicate,
    run_scenario_grid,
)
