"""Sieve maximum-likelihood estimation for the functional accelerated
failure time model with right-censored data.

The failure time (after a known monotone transform) is modeled as
``T = alpha'X + int beta(s) Z(s) ds + eps`` with an unspecified error law;
``beta`` and the error log-hazard ``g`` are estimated by B-spline sieves and
``(alpha, beta, g)`` is maximized jointly by BFGS with analytic gradients.
"""

from faft._backend import HAS_COMPILED, backend_name
from faft.fitting import FitSettings, SieveSettings, fit_dataset, q_n_rule
from faft.inference import (
    FitResult,
    PointwiseBand,
    SingularInformationError,
    alpha_standard_errors,
    beta_c_norm,
    beta_pointwise_band,
    covariance_matrix,
    mse_beta,
    mse_g,
    observed_hessian,
)
from faft.ingestion import (
    ArchiveError,
    DataError,
    SchemaError,
    TableSchema,
    load_long_csv,
    load_model,
    save_model,
)
from faft.likelihood import (
    AnalyticCovariate,
    FunctionalCovariate,
    GridCovariate,
    SieveParameters,
    SupportViolationError,
    SurvivalDataset,
    gradient,
    log_likelihood,
    residual_report,
)
from faft.mcharness import (
    CellDiagnosticError,
    CellSpec,
    CellSummary,
    convergence_diagnostic,
    run_cell,
)
from faft.optimizer import OptimizerConfig, OptimizerTrace, maximize
from faft.simgen import ScenarioConfig, TrueModel, calibrate_censoring, generate_dataset
from faft.splinecore import (
    KnotSequence,
    SplineBasis,
    SplineFunction,
    derivative_spline,
    evaluate_spline,
    quad_exp_spline,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyticCovariate",
    "ArchiveError",
    "CellDiagnosticError",
    "CellSpec",
    "CellSummary",
    "DataError",
    "FitResult",
    "FitSettings",
    "FunctionalCovariate",
    "GridCovariate",
    "HAS_COMPILED",
    "KnotSequence",
    "OptimizerConfig",
    "OptimizerTrace",
    "PointwiseBand",
    "ScenarioConfig",
    "SchemaError",
    "SieveParameters",
    "SieveSettings",
    "SingularInformationError",
    "SplineBasis",
    "SplineFunction",
    "SupportViolationError",
    "SurvivalDataset",
    "TableSchema",
    "TrueModel",
    "alpha_standard_errors",
    "backend_name",
    "beta_c_norm",
    "beta_pointwise_band",
    "calibrate_censoring",
    "convergence_diagnostic",
    "covariance_matrix",
    "derivative_spline",
    "evaluate_spline",
    "fit_dataset",
    "generate_dataset",
    "gradient",
    "load_long_csv",
    "load_model",
    "log_likelihood",
    "maximize",
    "mse_beta",
    "mse_g",
    "observed_hessian",
    "q_n_rule",
    "quad_exp_spline",
    "residual_report",
    "run_cell",
    "save_model",
]
