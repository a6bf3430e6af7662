import numpy as np
import pytest

from causalfda.errors import DataError
from causalfda.estimators import Method, estimate_or
from causalfda.fda import Curve, trapezoid_integrate
from causalfda.nuisance import FeatureSet, NuisanceModelSpec, OutcomeFit
from causalfda.simlab import (
    LinearDgpConfig,
    MaternDgpConfig,
    NoiseVarianceRule,
    Scenario,
    gen_linear_dgp,
    gen_matern_dgp,
    results_rows,
    run_replicate,
    run_scenario_grid,
    summary_rows,
)


class TestMaternDgp:
    def test_deterministic(self):
        cfg = MaternDgpConfig(n=50, grid_size=30, alpha_pi=0.3, alpha_mu=0.6)
        d1, t1 = gen_matern_dgp(cfg, np.random.default_rng(5))
        d2, t2 = gen_matern_dgp(cfg, np.random.default_rng(5))
        assert np.array_equal(d1.outcomes, d2.outcomes)
        assert np.array_equal(t1.pi_hat, t2.pi_hat)
        assert np.array_equal(t1.mu_hat1, t2.mu_hat1)

    def test_oracle_propensity_exact(self):
        cfg = MaternDgpConfig(n=40, grid_size=20, alpha_pi=0.0)
        _, truth = gen_matern_dgp(cfg, np.random.default_rng(1))
        assert np.all(truth.pi_hat == 0.5)

    def test_oracle_outcome_exact(self):
        cfg = MaternDgpConfig(n=40, grid_size=20, alpha_mu=0.0)
        _, truth = gen_matern_dgp(cfg, np.random.default_rng(2))
        assert np.array_equal(truth.mu_hat0, np.tile(truth.mu0.values, (40, 1)))
        assert np.array_equal(truth.mu_hat1, np.tile(truth.mu1.values, (40, 1)))

    def test_noise_variance_rule(self):
        cfg = MaternDgpConfig(n=10, grid_size=60)
        _, truth = gen_matern_dgp(cfg, np.random.default_rng(3))
        beta_sq = Curve(truth.beta.grid, truth.beta.values**2)
        pooled = trapezoid_integrate(beta_sq) * 0.25
        assert truth.noise_variance == pytest.approx(pooled / 10.0, rel=1e-12)

    def test_explicit_noise_variance(self):
        cfg = MaternDgpConfig(
            n=10, grid_size=20, noise_rule=NoiseVarianceRule.EXPLICIT, explicit_noise_variance=0.3
        )
        _, truth = gen_matern_dgp(cfg, np.random.default_rng(4))
        assert truth.noise_variance == 0.3

    def test_explicit_rule_requires_value(self):
        with pytest.raises(DataError):
            MaternDgpConfig(noise_rule=NoiseVarianceRule.EXPLICIT)

    def test_observed_outcome_consistency(self):
        cfg = MaternDgpConfig(n=30, grid_size=15)
        ds, truth = gen_matern_dgp(cfg, np.random.default_rng(6))
        y1 = truth.potential_outcomes(1)
        y0 = truth.potential_outcomes(0)
        expected = np.where(ds.treatment[:, None] == 1, y1, y0)
        assert np.allclose(ds.outcomes, expected, atol=1e-14)

    def test_data_paired_across_alpha(self):
        base = MaternDgpConfig(n=25, grid_size=12, alpha_pi=0.0, alpha_mu=0.0)
        noisy = MaternDgpConfig(n=25, grid_size=12, alpha_pi=1.0, alpha_mu=1.0)
        d1, _ = gen_matern_dgp(base, np.random.default_rng(9))
        d2, _ = gen_matern_dgp(noisy, np.random.default_rng(9))
        assert np.array_equal(d1.outcomes, d2.outcomes)
        assert np.array_equal(d1.treatment, d2.treatment)


class TestLinearDgp:
    def test_truth_is_constant_shift(self):
        cfg = LinearDgpConfig(n=100, grid_size=25, shift=1.0, coef_seed=3)
        _, truth = gen_linear_dgp(cfg, np.random.default_rng(0))
        assert np.all(truth.beta.values == 1.0)

    def test_propensity_coef_fixed_per_scenario(self):
        cfg = LinearDgpConfig(n=50, grid_size=10, coef_seed=8)
        _, t1 = gen_linear_dgp(cfg, np.random.default_rng(1))
        _, t2 = gen_linear_dgp(cfg, np.random.default_rng(2))
        assert np.array_equal(t1.propensity_coef, t2.propensity_coef)

    def test_noiseless_or_matches_sample_effect(self):
        # with zero outcome noise the per-arm least-squares fits recover the
        # coefficient curves exactly, so the OR estimate equals the sample
        # mean of the potential-outcome differences to rounding
        cfg = LinearDgpConfig(n=200, grid_size=30, coef_seed=5, outcome_noise_sd=0.0)
        ds, truth = gen_linear_dgp(cfg, np.random.default_rng(7))
        from causalfda.estimators import crossfit_nuisances

        nuis = crossfit_nuisances(ds, NuisanceModelSpec(), 4, np.random.default_rng(1))
        est = estimate_or(nuis.outcomes)
        sample_effect = (
            truth.potential_outcomes(ds.covariates, 1) - truth.potential_outcomes(ds.covariates, 0)
        ).mean(axis=0)
        assert np.max(np.abs(est.beta_hat.values - sample_effect)) < 1e-8

    def test_needs_more_rows_than_covariates(self):
        with pytest.raises(DataError):
            LinearDgpConfig(n=4, p=5)


class TestRunReplicate:
    def test_oracle_beats_all_noise_paired(self):
        oracle = Scenario("o", MaternDgpConfig(n=300, grid_size=40), compute_bands=False)
        noisy = Scenario(
            "n",
            MaternDgpConfig(n=300, grid_size=40, alpha_pi=1.0, alpha_mu=1.0),
            compute_bands=False,
        )
        for seed in (1, 2, 3):
            r_o = run_replicate(oracle, seed)
            r_n = run_replicate(noisy, seed)
            for est in ("or", "ipw", "dr"):
                assert r_o.mse[est] < r_n.mse[est]

    def test_band_fields_only_for_dr(self):
        sc = Scenario("b", MaternDgpConfig(n=120, grid_size=25), band_draws=200)
        r = run_replicate(sc, 4)
        assert set(r.delta) == {"dr"}
        assert set(r.mse) == {"or", "ipw", "dr"}
        assert 0.0 <= r.delta["dr"] <= 1.0

    def test_replicate_deterministic(self):
        sc = Scenario("d", MaternDgpConfig(n=100, grid_size=20), band_draws=200)
        r1, r2 = run_replicate(sc, 11), run_replicate(sc, 11)
        assert r1.mse == r2.mse and r1.q == r2.q and r1.delta == r2.delta

    def test_linear_scenario_runs_crossfit(self):
        sc = Scenario(
            "lin",
            LinearDgpConfig(n=150, grid_size=20, coef_seed=2),
            nuisance=NuisanceModelSpec(),
            folds=3,
            band_draws=200,
        )
        r = run_replicate(sc, 5)
        assert r.mse["dr"] < 1.0
        assert r.alpha_pi is None and r.alpha_mu is None

    def test_corrupted_spec_on_linear_rejected(self):
        sc = Scenario(
            "bad",
            LinearDgpConfig(n=60, grid_size=10),
            nuisance=NuisanceModelSpec(propensity_model="oracle_corrupted"),
        )
        with pytest.raises(DataError, match="linear benchmark"):
            run_replicate(sc, 1)

    def test_dump_contents(self):
        sc = Scenario("dump", MaternDgpConfig(n=80, grid_size=15), band_draws=200, dump_curves=True)
        r = run_replicate(sc, 3)
        d = r.curve_dump
        assert set(d) == {"scenario_id", "seed", "grid", "beta_true", "estimates", "band"}
        assert set(d["estimates"]) == {"or", "ipw", "dr"}
        assert len(d["band"]["lower"]) == 15


class TestScenarioGrid:
    def test_bookkeeping(self):
        sc = Scenario("g", MaternDgpConfig(n=60, grid_size=10), compute_bands=False)
        out = run_scenario_grid([sc], [1, 2, 3])
        assert len(out.results) == 3
        assert len(results_rows(out.results)) == 9  # three estimators each
        summary = summary_rows(out.results)
        assert len(summary) == 3
        assert all(row[5] == "3" for row in summary)  # replicate count column

    def test_parallel_matches_serial(self):
        sc = Scenario("p", MaternDgpConfig(n=80, grid_size=12, alpha_pi=0.5), band_draws=200)
        serial = run_scenario_grid([sc], [1, 2, 3, 4], jobs=1)
        parallel = run_scenario_grid([sc], [1, 2, 3, 4], jobs=2)
        assert results_rows(serial.results) == results_rows(parallel.results)

    def test_partial_failure_recorded(self):
        good = Scenario("ok", MaternDgpConfig(n=60, grid_size=10), compute_bands=False)
        bad = Scenario(
            "bad",
            LinearDgpConfig(n=60, grid_size=10),
            nuisance=NuisanceModelSpec(outcome_model="oracle_corrupted"),
            compute_bands=False,
        )
        out = run_scenario_grid([good, bad], [1, 2])
        assert len(out.results) == 2
        assert len(out.failures) == 2
        assert all(sid == "bad" for sid, _, _ in out.failures)

    def test_estimator_subset(self):
        sc = Scenario(
            "sub",
            MaternDgpConfig(n=60, grid_size=10),
            estimators=(Method.OR,),
            compute_bands=False,
        )
        out = run_scenario_grid([sc], [1])
        assert set(out.results[0].mse) == {"or"}
