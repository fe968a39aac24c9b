"""Hessian, covariance, band and error-metric tests."""

import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from faft.inference import (
    SingularInformationError,
    Z_95,
    alpha_standard_errors,
    beta_c_norm,
    beta_pointwise_band,
    covariance_matrix,
    finite_difference_hessian,
    mse_beta,
    mse_g,
    observed_hessian,
)
from faft.likelihood import (
    AnalyticCovariate,
    SieveParameters,
    SupportViolationError,
    SurvivalDataset,
)
from faft.splinecore import KnotSequence, SplineBasis, SplineFunction


def _basis(lower, upper, n_interior, order):
    return SplineBasis(KnotSequence.uniform(lower, upper, n_interior, order))


def _zero_covariate():
    return AnalyticCovariate(lambda s: np.zeros_like(s))


def _smooth_instance(rng, n=25):
    """Random data with a cubic log-hazard basis (FD-comparable)."""
    x = rng.normal(size=(n, 2))
    covs = [AnalyticCovariate(lambda s, c=rng.normal(scale=0.4, size=2): c[0] + c[1] * s)
            for _ in range(n)]
    y = rng.normal(scale=0.7, size=n)
    delta = (rng.random(n) < 0.7).astype(float)
    data = SurvivalDataset(y, delta, x, covs)
    beta_basis = _basis(0.0, 1.0, 1, 3)
    g_basis = _basis(-8.0, 8.0, 1, 4)
    params = SieveParameters(
        rng.normal(scale=0.3, size=2),
        SplineFunction(beta_basis, rng.normal(scale=0.3, size=beta_basis.dimension)),
        SplineFunction(g_basis, rng.normal(scale=0.2, size=g_basis.dimension) - 1.0),
    )
    return data, params


class TestObservedHessian:
    def test_constant_hazard_g_block_closed_form(self):
        # g == c on one order-2 basis spanning [a, b] with both coefficients c:
        # the g-block of H is -(e^c / n) sum_i int_a^{u_i} b_k b_l dt
        c = -0.4
        a, b = -3.0, 4.0
        g_basis = _basis(a, b, 0, 2)
        g = SplineFunction(g_basis, [c, c])
        rng = np.random.default_rng(5)
        n = 15
        y = rng.uniform(-2.0, 3.0, n)
        data = SurvivalDataset(y, np.zeros(n), np.zeros((n, 1)), [_zero_covariate()] * n)
        beta_basis = _basis(0.0, 1.0, 0, 2)
        params = SieveParameters(np.zeros(1), SplineFunction(beta_basis, np.zeros(2)), g)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            H = observed_hessian(data, params)
        # dense oracle for each (k, l) entry
        width = b - a
        for k in range(2):
            for l in range(2):
                acc = 0.0
                for u in y:
                    grid = np.linspace(a, u, 20001)
                    bk = g_basis.evaluate_many(grid)
                    acc += np.trapezoid(np.exp(c) * bk[:, k] * bk[:, l], grid)
                assert_allclose(H[3 + k, 3 + l], -acc / n, rtol=1e-7)
        assert width == 7.0

    def test_matches_finite_differences_on_cubic(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            data, params = _smooth_instance(rng)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                H = observed_hessian(data, params)
                H_fd = finite_difference_hessian(data, params)
            assert_allclose(H, H_fd, rtol=2e-4, atol=1e-6)

    def test_warns_away_from_stationary_point(self):
        rng = np.random.default_rng(3)
        data, params = _smooth_instance(rng)
        with pytest.warns(RuntimeWarning, match="stationary"):
            observed_hessian(data, params)

    def test_support_violation_raises(self):
        g_basis = _basis(-0.5, 0.5, 0, 2)
        g = SplineFunction(g_basis, [0.0, 0.0])
        data = SurvivalDataset([2.0], [1.0], [[0.0]], [_zero_covariate()])
        beta_basis = _basis(0.0, 1.0, 0, 2)
        params = SieveParameters(np.zeros(1), SplineFunction(beta_basis, np.zeros(2)), g)
        with pytest.raises(SupportViolationError):
            observed_hessian(data, params)

    def test_symmetry(self):
        rng = np.random.default_rng(21)
        data, params = _smooth_instance(rng)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            H = observed_hessian(data, params)
        assert_allclose(H, H.T, atol=1e-14)


class TestCovariance:
    def test_inverse_scaled_by_n(self):
        H = -np.diag([2.0, 8.0])
        cov = covariance_matrix(H, 100)
        assert_allclose(cov, np.diag([1.0 / 200.0, 1.0 / 800.0]))

    def test_singular_raises(self):
        with pytest.raises(SingularInformationError):
            covariance_matrix(np.diag([-1.0, 0.0]), 10)
        with pytest.raises(SingularInformationError):
            covariance_matrix(np.diag([-1.0, 1.0]), 10)


class TestMseBeta:
    def test_identical_curves_zero(self):
        basis = _basis(0.0, 1.0, 2, 3)
        coef = np.arange(basis.dimension, dtype=float)
        f = SplineFunction(basis, coef)
        assert mse_beta(f, lambda s: basis.evaluate_many(s) @ coef) < 1e-28

    def test_unit_shift_is_one(self):
        basis = _basis(0.0, 1.0, 1, 2)
        f = SplineFunction(basis, np.ones(basis.dimension))
        assert_allclose(mse_beta(f, lambda s: np.zeros_like(s)), 1.0, rtol=1e-12)

    def test_linear_difference(self):
        # int_0^1 s^2 ds = 1/3
        basis = _basis(0.0, 1.0, 0, 2)
        f = SplineFunction(basis, [0.0, 1.0])  # the line s
        assert_allclose(mse_beta(f, lambda s: np.zeros_like(s)), 1.0 / 3.0, rtol=1e-6)


class TestMseG:
    def test_identical_zero(self):
        basis = _basis(-2.0, 2.0, 1, 2)
        f = SplineFunction(basis, np.zeros(basis.dimension))
        assert mse_g(f, lambda t: np.zeros_like(t)) < 1e-28

    def test_constant_shift(self):
        basis = _basis(-2.0, 2.0, 0, 2)
        f = SplineFunction(basis, [0.5, 0.5])
        # 0.25 over length 3 of [-1.5, 1.5]
        assert_allclose(mse_g(f, lambda t: np.zeros_like(t)), 0.75, rtol=1e-12)

    def test_truncation_warns(self):
        basis = _basis(-1.0, 1.0, 0, 2)
        f = SplineFunction(basis, [1.0, 1.0])
        with pytest.warns(RuntimeWarning, match="truncates"):
            val = mse_g(f, lambda t: np.zeros_like(t))
        assert_allclose(val, 2.0, rtol=1e-12)


class TestBetaCNorm:
    def test_zero_coefficient(self):
        z = AnalyticCovariate(lambda s: np.ones_like(s))
        data = SurvivalDataset([0.0], [1.0], [[0.0]], [z])
        basis = _basis(0.0, 1.0, 1, 3)
        f = SplineFunction(basis, np.zeros(basis.dimension))
        assert beta_c_norm(f, data) == 0.0

    def test_unit_kernel_unit_coefficient(self):
        # single subject with Z == 1 and beta == 1: norm is (int 1 ds)^2 = 1
        z = AnalyticCovariate(lambda s: np.ones_like(s))
        data = SurvivalDataset([0.0], [1.0], [[0.0]], [z])
        basis = _basis(0.0, 1.0, 1, 2)
        f = SplineFunction(basis, np.ones(basis.dimension))
        assert_allclose(beta_c_norm(f, data), 1.0, rtol=1e-12)

    def test_truth_norm_matches_eigen_expansion(self):
        # ||beta0||^2_C with C from the design: scores U_k iid U(-1,1) give
        # E[U_k^2] = 1/3, so the population norm is sum_k xi_k^2 b_k^2 / 3
        # = sum_k k^(-4) / 3 = pi^4/270.
        from faft.simgen import (
            EigenExpansionCovariate,
            TrueModel,
            beta0_coefficients,
            expansion_scales,
        )

        rng = np.random.default_rng(77)
        n, K = 4000, 50
        covs = [EigenExpansionCovariate(rng.uniform(-1, 1, K)) for _ in range(n)]
        data = SurvivalDataset(np.zeros(n), np.ones(n), np.zeros((n, 1)), covs)
        truth = TrueModel("exponential-log", "gumbel-max", K)
        population = np.pi ** 4 / 270.0
        got = beta_c_norm(truth.beta0, data, n_grid=401)
        assert abs(got - population) / population < 0.02


class TestBand:
    def _fit(self):
        from faft.fitting import FitSettings, fit_dataset
        from faft.simgen import ScenarioConfig, generate_dataset

        data, _ = generate_dataset(ScenarioConfig(n=400, seed=12))
        return fit_dataset(data, FitSettings.simulation_default(400)), data

    def test_band_geometry_and_se(self):
        fit, data = self._fit()
        grid = np.linspace(0.0, 1.0, 51)
        band = beta_pointwise_band(fit, grid)
        assert np.all(band.lower <= band.estimate)
        assert np.all(band.estimate <= band.upper)
        # band half-width is Z_95 * sd, symmetric around the estimate
        assert_allclose(band.upper - band.estimate, band.estimate - band.lower, atol=1e-12)
        se = alpha_standard_errors(fit)
        assert se.shape == (2,)
        assert np.all(se > 0)
        assert np.all(se < 1.0)
        assert fit.alpha_se.shape == (2,)
        assert_allclose(fit.alpha_se, se, rtol=1e-10)
        assert abs(Z_95 - 1.96) < 1e-3
