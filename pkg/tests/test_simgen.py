"""Synthetic-data generator tests: distributions, truths, calibration."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from faft.simgen import (
    EigenExpansionCovariate,
    ScenarioConfig,
    _calibrated_tau,
    beta0_coefficients,
    calibrate_censoring,
    draw_error,
    draw_scalars,
    eigenfunctions,
    expansion_scales,
    functional_truth_weights,
    generate_dataset,
    true_loghazard,
)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ScenarioConfig(n=0)
        with pytest.raises(ValueError):
            ScenarioConfig(n=10, censoring_rate=1.0)
        with pytest.raises(ValueError):
            ScenarioConfig(n=10, error_law="cauchy")
        with pytest.raises(ValueError):
            ScenarioConfig(n=10, extreme_value_form="frechet")


class TestEigenBasis:
    def test_orthonormality(self):
        grid = np.linspace(0.0, 1.0, 200001)
        phi = eigenfunctions(grid, 8)
        gram = np.empty((8, 8))
        for i in range(8):
            for j in range(8):
                gram[i, j] = np.trapezoid(phi[:, i] * phi[:, j], grid)
        assert_allclose(gram, np.eye(8), atol=1e-8)

    def test_scales_and_coefficients(self):
        assert_allclose(expansion_scales(3), [1.0, -1.0 / math.sqrt(2), 1.0 / math.sqrt(3)])
        assert_allclose(beta0_coefficients(3), [-1.0, 2.0 ** -1.5, -3.0 ** -1.5])

    def test_truth_weights_are_minus_inverse_square(self):
        k = np.arange(1, 11, dtype=float)
        assert_allclose(functional_truth_weights(10), -(k ** -2.0), rtol=1e-14)

    def test_covariate_inner_product_uses_orthonormality(self):
        # int beta0 Z ds computed two ways: eigen shortcut vs dense quadrature
        rng = np.random.default_rng(1)
        z = EigenExpansionCovariate(rng.uniform(-1, 1, 50))
        grid = np.linspace(0.0, 1.0, 1000001)
        beta_vals = eigenfunctions(grid, 50) @ beta0_coefficients(50)
        oracle = np.trapezoid(beta_vals * z.value(grid), grid)
        shortcut = float(z.scores @ functional_truth_weights(50))
        assert_allclose(shortcut, oracle, atol=1e-7)


class TestScalars:
    def test_moments(self):
        rng = np.random.default_rng(0)
        draws = np.array([draw_scalars(rng) for _ in range(100_000)])
        x1, x2 = draws[:, 0], draws[:, 1]
        assert set(np.unique(x1)) == {0.0, 1.0}
        assert abs(x1.mean() - 0.5) < 0.005
        assert np.abs(x2).max() <= 2.0
        # truncated N(0, 0.5) variance oracle
        sigma = math.sqrt(0.5)
        a = 2.0 / sigma
        trunc_var = 0.5 * (1.0 - 2.0 * a * stats.norm.pdf(a) / (2.0 * stats.norm.cdf(a) - 1.0))
        assert abs(x2.var() - trunc_var) < 0.01


class TestErrorLaws:
    def test_exponential_log_mean_of_exp(self):
        rng = np.random.default_rng(2)
        eps = np.array([draw_error("exponential-log", rng) for _ in range(50_000)])
        assert abs(np.exp(eps).mean() - 1.0) < 0.02

    def test_g0_exponential_log_is_identity(self):
        g0 = true_loghazard("exponential-log")
        t = np.linspace(-3.0, 3.0, 7)
        assert_allclose(g0(t), t, atol=1e-14)

    def test_g0_gaussian_mixture_matches_density_ratio(self):
        g0 = true_loghazard("gaussian-mixture")
        t = np.array([-1.0, 0.0, 0.7, 2.0])
        dens = 0.5 * stats.norm.pdf(t) + 0.5 * stats.norm.pdf(t, scale=3.0)
        surv = 0.5 * stats.norm.sf(t) + 0.5 * stats.norm.sf(t, scale=3.0)
        assert_allclose(g0(t), np.log(dens / surv), rtol=1e-12)

    def test_g0_extreme_value_matches_numeric_hazard(self):
        g0 = true_loghazard("extreme-value", "gumbel-max")
        t = np.array([-0.5, 0.0, 1.0, 2.5])
        oracle = np.log(stats.gumbel_r.pdf(t) / stats.gumbel_r.sf(t))
        assert_allclose(g0(t), oracle, rtol=1e-10)

    def test_gumbel_min_form_collapses_to_exponential_log(self):
        g0 = true_loghazard("extreme-value", "gumbel-min")
        t = np.linspace(-2.0, 2.0, 5)
        assert_allclose(g0(t), t, atol=1e-14)
        rng1 = np.random.default_rng(9)
        rng2 = np.random.default_rng(9)
        a = [draw_error("extreme-value", rng1, "gumbel-min") for _ in range(10)]
        b = [draw_error("exponential-log", rng2) for _ in range(10)]
        assert a == b

    def test_law_distribution_checks(self):
        rng = np.random.default_rng(4)
        mix = np.array([draw_error("gaussian-mixture", rng) for _ in range(50_000)])
        assert abs(mix.mean()) < 0.05
        assert abs(mix.var() - 5.0) < 0.15  # 0.5*1 + 0.5*9
        gum = np.array([draw_error("extreme-value", rng) for _ in range(50_000)])
        assert abs(gum.mean() - np.euler_gamma) < 0.03


class TestCalibration:
    def test_achieves_target_rate(self):
        rng = np.random.default_rng(10)
        tau, achieved = calibrate_censoring("exponential-log", 0.25, rng, pilot=20_000)
        assert 0.245 <= achieved <= 0.255

    def test_tau_monotone_in_target(self):
        tau_25 = _calibrated_tau(ScenarioConfig(n=10, censoring_rate=0.25))
        tau_40 = _calibrated_tau(ScenarioConfig(n=10, censoring_rate=0.40))
        assert tau_40 < tau_25  # heavier censoring needs a shorter window

    def test_invalid_target_raises(self):
        rng = np.random.default_rng(11)
        with pytest.raises(ValueError):
            calibrate_censoring("exponential-log", 0.0, rng, pilot=2_000)
        with pytest.raises(ValueError):
            calibrate_censoring("exponential-log", 1.0, rng, pilot=2_000)


class TestGenerateDataset:
    def test_deterministic_per_seed(self):
        cfg = ScenarioConfig(n=50, seed=123)
        d1, t1 = generate_dataset(cfg)
        d2, t2 = generate_dataset(cfg)
        assert np.array_equal(d1.y, d2.y)
        assert np.array_equal(d1.delta, d2.delta)
        assert np.array_equal(d1.x, d2.x)
        assert t1.residual_shift == t2.residual_shift
        d3, _ = generate_dataset(ScenarioConfig(n=50, seed=124))
        assert not np.array_equal(d1.y, d3.y)

    def test_centering(self):
        data, truth = generate_dataset(ScenarioConfig(n=200, seed=7))
        assert_allclose(data.x.mean(axis=0), [0.0, 0.0], atol=1e-12)
        grid = np.linspace(0.0, 1.0, 11)
        zbar = np.mean([z.value(grid) for z in data.covariates], axis=0)
        assert_allclose(zbar, np.zeros_like(grid), atol=1e-12)
        # the absorbed location shift is recorded on the truth
        assert_allclose(
            truth.residual_shift,
            float(data.centering.x_means.sum()
                  + data.centering.z_mean.scores @ functional_truth_weights(50)),
            rtol=1e-12,
        )

    def test_achieved_censoring_near_target(self):
        data, _ = generate_dataset(ScenarioConfig(n=400, seed=31, censoring_rate=0.25))
        assert abs((1.0 - data.delta.mean()) - 0.25) < 0.06

    def test_truth_g0_shift(self):
        _, truth = generate_dataset(ScenarioConfig(n=100, seed=5))
        t = np.linspace(-1.0, 1.0, 9)
        assert_allclose(truth.g0(t), truth.g0_raw(t - truth.residual_shift), atol=1e-14)
        assert_allclose(truth.alpha, [1.0, 1.0])
