import math

import numpy as np
import pytest

from causalfda.errors import DataError, IndefiniteMatrixError
from causalfda.fda import Curve, TimeGrid, uniform_grid
from causalfda.randproc import (
    CovarianceMatrix,
    MaternParams,
    build_cov_matrix,
    factor_psd,
    matern_cov,
    sample_gp,
)


class TestMaternKernel:
    def test_zero_distance_is_variance(self):
        for nu in (0.5, 1.5, 2.5, 3.5):
            p = MaternParams(variance=1.7, smoothness=nu, length_scale=0.3)
            assert matern_cov(0.4, 0.4, p) == pytest.approx(1.7, abs=1e-14)

    def test_exponential_special_case(self):
        # smoothness 1/2 collapses to the exponential kernel exp(-d/l)
        p = MaternParams(1.0, 0.5, 0.25)
        assert matern_cov(0.0, 0.25, p) == pytest.approx(math.exp(-1.0), abs=1e-10)

    def test_smoothness_5_2_closed_form(self):
        # at d = l the scaled distance is sqrt(5), so the kernel equals
        # (1 + sqrt(5) + 5/3) * exp(-sqrt(5))
        p = MaternParams(1.0, 2.5, 0.25)
        expected = (1.0 + math.sqrt(5.0) + 5.0 / 3.0) * math.exp(-math.sqrt(5.0))
        assert matern_cov(0.0, 0.25, p) == pytest.approx(expected, abs=1e-10)

    def test_smoothness_3_2_closed_form(self):
        p = MaternParams(2.0, 1.5, 0.5)
        s = math.sqrt(3.0) * 0.25 / 0.5
        assert matern_cov(0.5, 0.75, p) == pytest.approx(2.0 * (1 + s) * math.exp(-s), abs=1e-12)

    def test_symmetry_exact(self):
        p = MaternParams(1.3, 3.5, 0.25)
        for s, t in [(0.1, 0.9), (0.33, 0.41), (0.0, 1.0)]:
            assert matern_cov(s, t, p) == matern_cov(t, s, p)

    def test_monotone_in_distance(self):
        dists = np.linspace(0.0, 1.0, 101)
        for nu in (0.5, 1.5, 2.5, 3.5):
            p = MaternParams(1.0, nu, 0.25)
            vals = np.array([matern_cov(0.0, d, p) for d in dists])
            assert np.all(np.diff(vals) <= 1e-15)
            assert np.all(vals > 0.0)
            assert np.all(vals <= 1.0 + 1e-15)

    def test_unsupported_smoothness(self):
        with pytest.raises(DataError, match="unsupported"):
            MaternParams(1.0, 2.0, 0.25)

    def test_nonpositive_params(self):
        with pytest.raises(DataError):
            MaternParams(-1.0, 0.5, 0.25)


class TestBuildCovMatrix:
    def test_two_point_exponential(self):
        g = TimeGrid([0.0, 1.0])
        cov = build_cov_matrix(g, MaternParams(1.0, 0.5, 1.0))
        e = math.exp(-1.0)
        assert np.allclose(cov.entries, [[1.0, e], [e, 1.0]], atol=1e-14)

    def test_diagonal_is_variance(self):
        g = uniform_grid(40)
        cov = build_cov_matrix(g, MaternParams(2.5, 2.5, 0.25))
        assert np.allclose(cov.diagonal(), 2.5, atol=1e-14)

    def test_benchmark_kernel_is_psd_after_jitter(self):
        g = uniform_grid(100)
        cov = build_cov_matrix(g, MaternParams(1.0, 3.5, 0.25))
        eigs = np.linalg.eigvalsh(cov.entries)
        assert eigs.min() >= -1e-8 * np.trace(cov.entries) / cov.m
        factor = factor_psd(cov)
        recon = factor.matrix @ factor.matrix.T
        assert np.max(np.abs(recon - cov.entries)) <= factor.jitter + 1e-10


class TestFactorPsd:
    def test_identity(self):
        g = TimeGrid([0.0, 0.5, 1.0])
        f = factor_psd(CovarianceMatrix(g, np.eye(3)))
        assert f.jitter == 0.0
        assert np.allclose(f.matrix, np.eye(3), atol=1e-14)

    def test_rank_one_repaired(self):
        g = uniform_grid(6)
        v = np.arange(1.0, 7.0)
        cov = CovarianceMatrix(g, np.outer(v, v))
        f = factor_psd(cov)
        resid = np.abs(f.matrix @ f.matrix.T - cov.entries)
        # the repair adds at most jitter * I
        assert np.max(resid) <= f.jitter * cov.m + 1e-9

    def test_indefinite_raises(self):
        # eigenvalues are 3 and -1: not repairable by the default ladder
        g = TimeGrid([0.0, 1.0])
        cov = CovarianceMatrix(g, np.array([[1.0, 2.0], [2.0, 1.0]]))
        with pytest.raises(IndefiniteMatrixError):
            factor_psd(cov)

    def test_asymmetric_rejected(self):
        g = TimeGrid([0.0, 1.0])
        with pytest.raises(DataError, match="symmetric"):
            CovarianceMatrix(g, np.array([[1.0, 0.5], [0.1, 1.0]]))


class TestSampleGp:
    def test_determinism(self):
        g = uniform_grid(30)
        f = factor_psd(build_cov_matrix(g, MaternParams(1.0, 2.5, 0.25)))
        a = sample_gp(f, np.random.default_rng(99))
        b = sample_gp(f, np.random.default_rng(99))
        assert np.array_equal(a.values, b.values)

    def test_degenerate_variance_returns_mean(self):
        g = uniform_grid(20)
        f = factor_psd(build_cov_matrix(g, MaternParams(1e-30, 2.5, 0.25)))
        mean = Curve(g, np.linspace(-1, 1, 20))
        draw = sample_gp(f, np.random.default_rng(0), mean=mean)
        assert np.max(np.abs(draw.values - mean.values)) < 1e-6

    def test_empirical_covariance_matches_target(self):
        g = uniform_grid(50)
        cov = build_cov_matrix(g, MaternParams(1.0, 2.5, 0.25))
        f = factor_psd(cov)
        draws = sample_gp(f, np.random.default_rng(1234), size=5000)
        emp = draws.T @ draws / draws.shape[0]
        rel = np.linalg.norm(emp - cov.entries) / np.linalg.norm(cov.entries)
        assert rel < 0.05

    def test_mean_within_monte_carlo_bound(self):
        # 3-sigma bound on the pointwise mean of 1e4 draws: 4 * eta / sqrt(1e4)
        g = uniform_grid(25)
        eta2 = 1.5
        f = factor_psd(build_cov_matrix(g, MaternParams(eta2, 1.5, 0.25)))
        mean = Curve(g, np.full(25, 0.7))
        draws = sample_gp(f, np.random.default_rng(5), size=10_000) + mean.values
        bound = 4.0 * math.sqrt(eta2) / math.sqrt(10_000)
        assert np.max(np.abs(draws.mean(axis=0) - mean.values)) < bound

    def test_dimension_mismatch(self):
        g = uniform_grid(10)
        f = factor_psd(build_cov_matrix(g, MaternParams(1.0, 2.5, 0.25)))
        with pytest.raises(DataError):
            sample_gp(f, np.random.default_rng(0), mean=Curve(uniform_grid(11), np.zeros(11)))
