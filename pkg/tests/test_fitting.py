"""Fitting pipeline tests: sieve rule, support selection, end-to-end fits."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from faft.fitting import (
    FitSettings,
    SieveSettings,
    dataset_fingerprint,
    fit_dataset,
    initial_values,
    q_n_rule,
    select_support,
)
from faft.simgen import ScenarioConfig, generate_dataset


class TestDimensionRule:
    def test_reference_sizes(self):
        assert q_n_rule(400) == 4
        assert q_n_rule(600) == 4
        assert q_n_rule(800) == 5

    def test_perfect_fourth_powers(self):
        assert q_n_rule(16) == 2
        assert q_n_rule(81) == 3
        assert q_n_rule(256) == 4
        assert q_n_rule(6561) == 9

    def test_too_small_raises(self):
        with pytest.raises(ValueError):
            q_n_rule(15)


class TestSieveSettings:
    def test_simulation_default_dimensions(self):
        s = SieveSettings.simulation_default(400)
        assert (s.beta_order, s.beta_interior) == (2, 2)
        assert s.beta_basis().dimension == 4
        assert s.g_basis(-1.0, 1.0).dimension == 4

    def test_cubic_preset(self):
        s = SieveSettings.cubic(400)
        assert s.beta_order == 4
        assert s.beta_basis().dimension == 4
        # never fewer than order-many basis functions
        s_small = SieveSettings.cubic(20)
        assert s_small.beta_basis().dimension == 4


class TestSupportSelection:
    def test_covers_residuals_with_iqr_pad(self):
        rng = np.random.default_rng(0)
        r = rng.normal(size=500)
        a, b = select_support(r)
        q25, q75 = np.percentile(r, [25, 75])
        pad = 0.5 * (q75 - q25)
        assert_allclose(a, r.min() - pad)
        assert_allclose(b, r.max() + pad)

    def test_degenerate_residuals_still_padded(self):
        a, b = select_support(np.zeros(10))
        assert a < 0 < b


class TestInitialValues:
    def test_exact_recovery_without_noise(self):
        data, _ = generate_dataset(ScenarioConfig(n=100, seed=2))
        basis = SieveSettings.simulation_default(400).beta_basis()
        W = np.hstack([data.x, data.functional_design(basis)])
        theta_true = np.arange(1.0, W.shape[1] + 1.0)
        clean = type(data)(W @ theta_true, data.delta, data.x, data.covariates)
        theta0, residuals = initial_values(clean, basis)
        assert_allclose(theta0, theta_true, atol=1e-8)
        assert_allclose(residuals, 0.0, atol=1e-8)


class TestFingerprint:
    def test_stable_and_sensitive(self):
        data, _ = generate_dataset(ScenarioConfig(n=40, seed=3))
        f1 = dataset_fingerprint(data)
        f2 = dataset_fingerprint(data)
        assert f1 == f2
        assert f1["n_records"] == 40
        perturbed = type(data)(data.y + 1e-9, data.delta, data.x, data.covariates)
        assert dataset_fingerprint(perturbed)["column_hash"] != f1["column_hash"]


class TestFitDataset:
    def test_smoke_recovers_alpha(self):
        data, truth = generate_dataset(ScenarioConfig(n=400, seed=42))
        fit = fit_dataset(data, FitSettings.simulation_default(400))
        assert fit.converged
        assert fit.trace.termination == "gradient"
        # alpha0 = (1, 1); at n = 400 the SE is around 0.12
        assert np.all(np.abs(fit.params.alpha - truth.alpha) < 4.0 * fit.alpha_se)
        assert np.all(fit.alpha_se > 0.01)
        a, b = fit.support
        report_residuals = data.y - np.hstack(
            [data.x, data.functional_design(fit.params.beta.basis)]
        ) @ np.concatenate([fit.params.alpha, fit.params.beta.coefficients])
        assert report_residuals.max() <= b
        assert fit.n_records == 400
        assert fit.fingerprint == dataset_fingerprint(data)

    def test_deterministic(self):
        data, _ = generate_dataset(ScenarioConfig(n=400, seed=8))
        settings = FitSettings.simulation_default(400)
        f1 = fit_dataset(data, settings)
        f2 = fit_dataset(data, settings)
        assert np.array_equal(f1.params.packed, f2.params.packed)
        assert f1.loglik == f2.loglik

    def test_widening_recorded(self):
        # seed whose maximizer presses the initial support boundary
        data, _ = generate_dataset(ScenarioConfig(n=400, seed=1074))
        fit = fit_dataset(data, FitSettings.simulation_default(400))
        assert fit.support_widenings >= 1
        assert fit.converged
