"""Synthetic benchmark lab: data-generating processes, scenarios, and the
Monte Carlo replicate runner.

Two generative families are provided. The stationary-process family draws
the effect and baseline curves from a Matérn Gaussian process and injects
per-unit nuisance *values* that blend truth with exogenous random draws, so
estimator robustness can be studied as a function of the blend weights
without any model fitting in the loop. The linear family generates a
function-on-scalar outcome model with logistic treatment assignment and fits
nuisance models for real, optionally on deliberately distorted features.

All randomness flows from a single integer seed per replicate, split into
fixed substreams (data, folds, band draws), so replicates reproduce exactly
regardless of execution order or parallelism.
"""

from __future__ import annotations

import enum
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CausalfdaError, DataError
from .estimators import (
    Method,
    estimate_dr_crossfit,
    estimate_dr_onefold,
    estimate_ipw,
    estimate_or,
)
from .estimators import crossfit_nuisances
from .fda import Curve, ObservationalDataset, TimeGrid, l2_distance_sq, uniform_grid
from .inference import DEFAULT_BAND_DRAWS, coverage_delta, estimate_sigma, supt_band
from .nuisance import (
    OUTCOME_CORRUPTION_KERNEL,
    NuisanceModelSpec,
    OutcomeFit,
    OutcomeModel,
    PropensityFit,
    PropensityModel,
    sample_truncated_mixture,
)
from .randproc import MaternParams, build_cov_matrix, factor_psd, sample_gp

__all__ = [
    "NoiseVarianceRule",
    "MaternDgpConfig",
    "LinearDgpConfig",
    "MaternTruth",
    "LinearTruth",
    "Scenario",
    "ReplicateResult",
    "gen_matern_dgp",
    "gen_linear_dgp",
    "run_replicate",
    "run_scenario_grid",
    "GridRunResult",
    "results_rows",
    "summary_rows",
    "RESULT_COLUMNS",
    "SUMMARY_COLUMNS",
]


class NoiseVarianceRule(str, enum.Enum):
    """How the outcome-noise variance is chosen.

    SIGNAL_TENTH sets it to one tenth of the pooled (time-averaged)
    cross-sectional signal variance; EXPLICIT uses a user-supplied value.
    """

    SIGNAL_TENTH = "signal_tenth"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class MaternDgpConfig:
    """Stationary-process benchmark: GP effect/baseline plus injected nuisances."""

    n: int = 2000
    grid_size: int = 100
    signal_kernel: MaternParams = field(
        default_factory=lambda: MaternParams(1.0, 3.5, 0.25)
    )
    noise_kernel: MaternParams = field(
        default_factory=lambda: MaternParams(1.0, 2.5, 0.25)
    )
    noise_rule: NoiseVarianceRule = NoiseVarianceRule.SIGNAL_TENTH
    explicit_noise_variance: float | None = None
    p_treat: float = 0.5
    alpha_pi: float = 0.0
    alpha_mu: float = 0.0

    def __post_init__(self):
        if self.n < 2:
            raise DataError(f"n must be at least 2, got {self.n}")
        for name, a in (("alpha_pi", self.alpha_pi), ("alpha_mu", self.alpha_mu)):
            if not 0.0 <= a <= 1.0:
                raise DataError(f"{name} must be in [0, 1], got {a}")
        if not 0.0 < self.p_treat < 1.0:
            raise DataError(f"p_treat must be in (0, 1), got {self.p_treat}")
        if self.noise_rule is NoiseVarianceRule.EXPLICIT:
            v = self.explicit_noise_variance
            if v is None or not v > 0:
                raise DataError("explicit noise rule needs explicit_noise_variance > 0")


@dataclass(frozen=True)
class LinearDgpConfig:
    """Function-on-scalar linear outcome model with logistic treatment."""

    n: int = 1000
    grid_size: int = 100
    p: int = 5
    coef_kernel: MaternParams = field(
        default_factory=lambda: MaternParams(1.0, 3.5, 0.25)
    )
    shift: float = 1.0  # constant effect added to the treated arm
    logit_noise_sd: float = 1.0
    outcome_noise_sd: float = 1.0
    coef_seed: int = 0  # propensity coefficients are fixed per scenario

    def __post_init__(self):
        if self.n <= self.p:
            raise DataError(f"need n > p, got n={self.n}, p={self.p}")
        if self.outcome_noise_sd < 0 or self.logit_noise_sd < 0:
            raise DataError("noise standard deviations must be nonnegative")


@dataclass(frozen=True, eq=False)
class MaternTruth:
    """Everything the generator knows: true curves, noise, injected nuisances."""

    beta: Curve
    rho: Curve
    mu0: Curve
    mu1: Curve
    pi_true: np.ndarray  # (n,)
    noise: np.ndarray  # (n, m) outcome noise curves
    pi_hat: np.ndarray  # (n,) injected propensity values
    mu_hat0: np.ndarray  # (n, m) injected regression curves
    mu_hat1: np.ndarray
    noise_variance: float

    def potential_outcomes(self, arm: int) -> np.ndarray:
        mu = self.mu1 if arm == 1 else self.mu0
        return mu.values + self.noise


@dataclass(frozen=True, eq=False)
class LinearTruth:
    beta: Curve
    theta0: np.ndarray  # (p, m) coefficient curves per arm
    theta1: np.ndarray
    propensity_coef: np.ndarray  # (p,)
    pi_true: np.ndarray  # (n,)
    noise: np.ndarray  # (n, m)

    def potential_outcomes(self, covariates: np.ndarray, arm: int) -> np.ndarray:
        theta = self.theta1 if arm == 1 else self.theta0
        base = covariates @ theta + self.noise
        return base + self.beta.values if arm == 1 else base


def _pooled_signal_variance(beta: Curve, p_treat: float) -> float:
    """Time-averaged cross-sectional variance of A*beta + rho over units.

    The baseline curve is common to all units, so at each time the variance
    over units is beta(t)^2 * p(1-p); pooling averages that over the grid
    with trapezoid weights.
    """
    sq = Curve(beta.grid, beta.values**2)
    from .fda import trapezoid_integrate

    return trapezoid_integrate(sq) * p_treat * (1.0 - p_treat)


def gen_matern_dgp(
    cfg: MaternDgpConfig, rng: np.random.Generator
) -> tuple[ObservationalDataset, MaternTruth]:
    """Generate one replicate of the stationary-process benchmark.

    The effect and baseline curves are drawn fresh per replicate. Injected
    nuisance values are produced from a dedicated substream, so two
    configurations differing only in the blend weights see identical data
    and identical corruption draws under the same seed.
    """
    rng_data, rng_corrupt = rng.spawn(2)
    grid = uniform_grid(cfg.grid_size)
    signal_factor = factor_psd(build_cov_matrix(grid, cfg.signal_kernel))
    beta = sample_gp(signal_factor, rng_data)
    rho = sample_gp(signal_factor, rng_data)
    mu0 = rho
    mu1 = Curve(grid, beta.values + rho.values)

    if cfg.noise_rule is NoiseVarianceRule.SIGNAL_TENTH:
        pooled = _pooled_signal_variance(beta, cfg.p_treat)
        if pooled <= 1e-12:
            raise DataError(
                "signal variance is degenerate (flat effect curve); "
                "use the explicit noise rule"
            )
        noise_var = pooled / 10.0
    else:
        noise_var = float(cfg.explicit_noise_variance)
    noise_factor = factor_psd(
        build_cov_matrix(grid, replace(cfg.noise_kernel, variance=noise_var))
    )

    a = (rng_data.random(cfg.n) < cfg.p_treat).astype(np.int64)
    noise = sample_gp(noise_factor, rng_data, size=cfg.n)
    outcomes = np.where(a[:, None] == 1, mu1.values, mu0.values) + noise
    dataset = ObservationalDataset(
        treatment=a,
        covariates=np.empty((cfg.n, 0)),
        outcomes=outcomes,
        grid=grid,
    )

    # corruption draws are always consumed, keeping substreams aligned across
    # alpha settings at the same seed; at alpha = 0 the blend is exact truth
    u = sample_truncated_mixture(rng_corrupt, cfg.n)
    corr_factor = factor_psd(build_cov_matrix(grid, OUTCOME_CORRUPTION_KERNEL))
    ucurves = sample_gp(corr_factor, rng_corrupt, size=cfg.n)
    pi_hat = cfg.alpha_pi * u + (1.0 - cfg.alpha_pi) * cfg.p_treat
    mu_hat0 = cfg.alpha_mu * ucurves + (1.0 - cfg.alpha_mu) * mu0.values
    mu_hat1 = cfg.alpha_mu * ucurves + (1.0 - cfg.alpha_mu) * mu1.values

    truth = MaternTruth(
        beta=beta,
        rho=rho,
        mu0=mu0,
        mu1=mu1,
        pi_true=np.full(cfg.n, cfg.p_treat),
        noise=noise,
        pi_hat=pi_hat,
        mu_hat0=mu_hat0,
        mu_hat1=mu_hat1,
        noise_variance=noise_var,
    )
    return dataset, truth


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def gen_linear_dgp(
    cfg: LinearDgpConfig, rng: np.random.Generator
) -> tuple[ObservationalDataset, LinearTruth]:
    """Generate one replicate of the linear function-on-scalar benchmark.

    Covariates are uniform on [-1, 1], so their mean is zero and the true
    effect curve is exactly the constant shift. The propensity coefficient
    vector is drawn from its own stream keyed by coef_seed and is therefore
    shared by all replicates of a scenario.
    """
    grid = uniform_grid(cfg.grid_size)
    coef_rng = np.random.default_rng(np.random.SeedSequence(cfg.coef_seed))
    eta = coef_rng.normal(size=cfg.p)

    coef_factor = factor_psd(build_cov_matrix(grid, cfg.coef_kernel))
    theta0 = sample_gp(coef_factor, rng, size=cfg.p)
    theta1 = sample_gp(coef_factor, rng, size=cfg.p)
    x = rng.uniform(-1.0, 1.0, size=(cfg.n, cfg.p))
    logit_noise = rng.normal(0.0, cfg.logit_noise_sd, size=cfg.n)
    pi_true = _sigmoid(x @ eta + logit_noise)
    a = (rng.random(cfg.n) < pi_true).astype(np.int64)
    noise = cfg.outcome_noise_sd * rng.standard_normal((cfg.n, grid.m))
    y0 = x @ theta0 + noise
    y1 = x @ theta1 + cfg.shift + noise
    outcomes = np.where(a[:, None] == 1, y1, y0)
    dataset = ObservationalDataset(treatment=a, covariates=x, outcomes=outcomes, grid=grid)
    truth = LinearTruth(
        beta=Curve(grid, np.full(grid.m, cfg.shift)),
        theta0=theta0,
        theta1=theta1,
        propensity_coef=eta,
        pi_true=pi_true,
        noise=noise,
    )
    return dataset, truth


@dataclass(frozen=True)
class Scenario:
    """One fully specified simulation cell."""

    scenario_id: str
    dgp: MaternDgpConfig | LinearDgpConfig
    nuisance: NuisanceModelSpec = field(default_factory=NuisanceModelSpec)
    estimators: tuple[Method, ...] = (Method.OR, Method.IPW, Method.DR)
    folds: int = 5
    band_level: float = 0.95
    band_draws: int = DEFAULT_BAND_DRAWS
    compute_bands: bool = True
    dump_curves: bool = False

    def __post_init__(self):
        if not self.estimators:
            raise DataError("scenario requests no estimators")
        if not 0.0 < self.band_level < 1.0:
            raise DataError(f"band_level must be in (0, 1), got {self.band_level}")

    @property
    def alphas(self) -> tuple[float | None, float | None]:
        if isinstance(self.dgp, MaternDgpConfig):
            return self.dgp.alpha_pi, self.dgp.alpha_mu
        return None, None


@dataclass(frozen=True, eq=False)
class ReplicateResult:
    scenario_id: str
    seed: int
    n: int
    alpha_pi: float | None
    alpha_mu: float | None
    mse: dict[str, float]
    delta: dict[str, float]
    simul_covered: dict[str, bool]
    q: dict[str, float]
    runtime_ms: float
    curve_dump: dict | None = None


def _replicate_streams(seed: int) -> tuple[np.random.Generator, ...]:
    root = np.random.SeedSequence(int(seed))
    return tuple(np.random.default_rng(c) for c in root.spawn(3))


def _injected_fits(
    dataset: ObservationalDataset, truth: MaternTruth, spec: NuisanceModelSpec
) -> tuple[PropensityFit, OutcomeFit]:
    pf = PropensityFit(values=truth.pi_hat, clip_bound=spec.clip_bound)
    of = OutcomeFit(grid=dataset.grid, mu0=truth.mu_hat0, mu1=truth.mu_hat1)
    return pf, of


def run_replicate(scenario: Scenario, seed: int) -> ReplicateResult:
    """Generate data, run the requested estimators, evaluate error and coverage.

    The doubly robust estimator gets a simultaneous band when bands are on;
    the single-model estimators are scored on error only.
    """
    t0 = time.perf_counter()
    rng_data, rng_folds, rng_band = _replicate_streams(seed)
    spec = scenario.nuisance

    if isinstance(scenario.dgp, MaternDgpConfig):
        dataset, truth = gen_matern_dgp(scenario.dgp, rng_data)
        prop_fit, out_fit = _injected_fits(dataset, truth, spec)
        dr = lambda: estimate_dr_onefold(dataset, out_fit, prop_fit)  # noqa: E731
    else:
        dataset, truth = gen_linear_dgp(scenario.dgp, rng_data)
        if spec.propensity_model is PropensityModel.ORACLE_CORRUPTED or (
            spec.outcome_model is OutcomeModel.ORACLE_CORRUPTED
        ):
            raise DataError(
                f"scenario {scenario.scenario_id!r}: the linear benchmark fits its "
                "nuisances; corrupted models only apply to the stationary benchmark"
            )
        nuis = crossfit_nuisances(dataset, spec, scenario.folds, rng_folds)
        prop_fit, out_fit = nuis.propensity, nuis.outcomes
        dr = lambda: estimate_dr_crossfit(  # noqa: E731
            dataset, spec, scenario.folds, rng_folds, nuisances=nuis
        )

    beta_true = truth.beta
    mse: dict[str, float] = {}
    delta: dict[str, float] = {}
    covered: dict[str, bool] = {}
    qcal: dict[str, float] = {}
    estimates: dict[str, Curve] = {}
    band = None

    for method in scenario.estimators:
        if method is Method.OR:
            est = estimate_or(out_fit)
        elif method is Method.IPW:
            est = estimate_ipw(dataset, prop_fit)
        else:
            est, infl = dr()
            if scenario.compute_bands:
                sigma = estimate_sigma(infl)
                band = supt_band(
                    est.beta_hat,
                    sigma,
                    level=scenario.band_level,
                    draws=scenario.band_draws,
                    rng=rng_band,
                )
                delta[method.value] = coverage_delta(beta_true, band)
                covered[method.value] = bool(
                    np.all(
                        (beta_true.values >= band.lower.values)
                        & (beta_true.values <= band.upper.values)
                    )
                )
                qcal[method.value] = band.calibration
        estimates[method.value] = est.beta_hat
        mse[method.value] = l2_distance_sq(beta_true, est.beta_hat)

    runtime_ms = (time.perf_counter() - t0) * 1000.0
    dump = None
    if scenario.dump_curves:
        dump = {
            "scenario_id": scenario.scenario_id,
            "seed": int(seed),
            "grid": dataset.grid.points.tolist(),
            "beta_true": beta_true.values.tolist(),
            "estimates": {k: v.values.tolist() for k, v in estimates.items()},
            "band": None
            if band is None
            else {
                "lower": band.lower.values.tolist(),
                "upper": band.upper.values.tolist(),
                "level": band.level,
                "q": band.calibration,
            },
        }
    return ReplicateResult(
        scenario_id=scenario.scenario_id,
        seed=int(seed),
        n=dataset.n,
        alpha_pi=scenario.alphas[0],
        alpha_mu=scenario.alphas[1],
        mse=mse,
        delta=delta,
        simul_covered=covered,
        q=qcal,
        runtime_ms=runtime_ms,
        curve_dump=dump,
    )


@dataclass(frozen=True, eq=False)
class GridRunResult:
    results: list[ReplicateResult]
    failures: list[tuple[str, int, str]]  # (scenario_id, seed, message)


def _run_task(task: tuple[Scenario, int]) -> ReplicateResult:
    scenario, seed = task
    return run_replicate(scenario, seed)


def run_scenario_grid(
    scenarios: list[Scenario], seeds: list[int], jobs: int = 1
) -> GridRunResult:
    """Run every scenario under every seed, in order or on a worker pool.

    Replicate failures are recorded and do not stop the run. Results come
    back ordered by (scenario position, seed) no matter how workers finish,
    so output files do not depend on the parallelism degree.
    """
    tasks = [(sc, int(seed)) for sc in scenarios for seed in seeds]
    results: dict[tuple[str, int], ReplicateResult] = {}
    failures: list[tuple[str, int, str]] = []
    if jobs <= 1:
        for sc, seed in tasks:
            try:
                results[(sc.scenario_id, seed)] = run_replicate(sc, seed)
            except CausalfdaError as exc:
                failures.append((sc.scenario_id, seed, str(exc)))
    else:
        with ProcessPoolExecutor(max_workers=int(jobs)) as pool:
            futures = {pool.submit(_run_task, t): t for t in tasks}
            for fut, (sc, seed) in futures.items():
                try:
                    results[(sc.scenario_id, seed)] = fut.result()
                except CausalfdaError as exc:
                    failures.append((sc.scenario_id, seed, str(exc)))
    ordered = [
        results[(sc.scenario_id, seed)]
        for sc in scenarios
        for seed in seeds
        if (sc.scenario_id, seed) in results
    ]
    failures.sort(key=lambda f: (f[0], f[1]))
    return GridRunResult(results=ordered, failures=failures)


# --- flat CSV schemas ----------------------------------------------------------

RESULT_COLUMNS = (
    "scenario_id",
    "alpha_pi",
    "alpha_mu",
    "n",
    "seed",
    "estimator",
    "mse",
    "delta",
    "simul_covered",
    "q",
)

SUMMARY_COLUMNS = (
    "scenario_id",
    "alpha_pi",
    "alpha_mu",
    "n",
    "estimator",
    "replicates",
    "mean_mse",
    "median_mse",
    "mean_delta",
    "coverage",
    "mean_q",
)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def results_rows(results: list[ReplicateResult]) -> list[list[str]]:
    """Flatten replicate results to one row per (replicate, estimator)."""
    rows = []
    for r in results:
        for estimator, mse in r.mse.items():
            rows.append(
                [
                    r.scenario_id,
                    _fmt(r.alpha_pi),
                    _fmt(r.alpha_mu),
                    _fmt(r.n),
                    _fmt(r.seed),
                    estimator,
                    _fmt(mse),
                    _fmt(r.delta.get(estimator)),
                    _fmt(r.simul_covered.get(estimator)),
                    _fmt(r.q.get(estimator)),
                ]
            )
    return rows


def summary_rows(results: list[ReplicateResult]) -> list[list[str]]:
    """Aggregate per (scenario, estimator): error moments and empirical coverage."""
    cells: dict[tuple[str, str], dict] = {}
    for r in results:
        for estimator, mse in r.mse.items():
            key = (r.scenario_id, estimator)
            cell = cells.setdefault(
                key,
                {
                    "alpha_pi": r.alpha_pi,
                    "alpha_mu": r.alpha_mu,
                    "n": r.n,
                    "mse": [],
                    "delta": [],
                    "covered": [],
                    "q": [],
                },
            )
            cell["mse"].append(mse)
            if estimator in r.delta:
                cell["delta"].append(r.delta[estimator])
                cell["covered"].append(r.simul_covered[estimator])
                cell["q"].append(r.q[estimator])
    rows = []
    for (scenario_id, estimator), cell in cells.items():
        mse = np.asarray(cell["mse"])
        has_band = len(cell["delta"]) > 0
        rows.append(
            [
                scenario_id,
                _fmt(cell["alpha_pi"]),
                _fmt(cell["alpha_mu"]),
                _fmt(cell["n"]),
                estimator,
                _fmt(len(cell["mse"])),
                _fmt(float(mse.mean())),
                _fmt(float(np.median(mse))),
                _fmt(float(np.mean(cell["delta"])) if has_band else None),
                _fmt(float(np.mean(cell["covered"])) if has_band else None),
                _fmt(float(np.mean(cell["q"])) if has_band else None),
            ]
        )
    return rows
