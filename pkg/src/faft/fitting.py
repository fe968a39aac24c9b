"""End-to-end fitting pipeline: sieve setup, initialization, log-hazard
support selection with widen-and-refit, optimization and inference.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from faft.inference import FitResult, alpha_standard_errors, observed_hessian
from faft.likelihood import PackedObjective, SupportViolationError, SurvivalDataset
from faft.optimizer import OptimizerConfig, maximize
from faft.splinecore import KnotSequence, SplineBasis, check_sieve_bound


def q_n_rule(n: int) -> int:
    """Spline dimension rule floor(n^(1/4)); 4 at n = 400, 5 at n = 800."""
    if n < 16:
        raise ValueError("dimension rule needs n >= 16")
    q = int(math.floor(n ** 0.25))
    # guard against floating-point undershoot at perfect fourth powers
    if (q + 1) ** 4 <= n:
        q += 1
    return q


@dataclass(frozen=True)
class SieveSettings:
    """Spline orders and interior-knot counts of the two bases."""

    beta_order: int
    beta_interior: int
    g_order: int
    g_interior: int

    @classmethod
    def simulation_default(cls, n: int) -> "SieveSettings":
        # q_n basis functions on equally spaced knots, so order = q_n - interior
        q = q_n_rule(n)
        return cls(beta_order=2, beta_interior=q - 2, g_order=2, g_interior=q - 2)

    @classmethod
    def cubic(cls, n: int) -> "SieveSettings":
        q = max(q_n_rule(n), 4)
        return cls(beta_order=4, beta_interior=q - 4, g_order=4, g_interior=q - 4)

    def beta_basis(self) -> SplineBasis:
        return SplineBasis(KnotSequence.uniform(0.0, 1.0, self.beta_interior, self.beta_order))

    def g_basis(self, a: float, b: float) -> SplineBasis:
        return SplineBasis(KnotSequence.uniform(a, b, self.g_interior, self.g_order))


@dataclass(frozen=True)
class FitSettings:
    sieve: SieveSettings
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    support_margin: float = 0.5
    max_widenings: int = 3
    coef_bound: float = 1e3
    #: sup-norm gradient level above which a stalled line search is treated
    #: as a support problem (the maximizer is pressing against [a, b]) and
    #: the support is widened rather than the fit accepted.
    stall_gradient_tol: float = 1e-3

    @classmethod
    def simulation_default(cls, n: int) -> "FitSettings":
        return cls(SieveSettings.simulation_default(n))

    @classmethod
    def cubic(cls, n: int) -> "FitSettings":
        return cls(SieveSettings.cubic(n))


def dataset_fingerprint(data: SurvivalDataset) -> dict:
    """Record count plus a hash of the scalar columns, for archive re-scoring."""
    h = hashlib.sha256()
    for arr in (data.y, data.delta, data.x):
        h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return {"n_records": int(data.n), "column_hash": h.hexdigest()[:16]}


def initial_values(data: SurvivalDataset, beta_basis: SplineBasis):
    """Least-squares start for (alpha, gamma_beta), ignoring censoring."""
    W = np.hstack([data.x, data.functional_design(beta_basis)])
    theta0, *_ = np.linalg.lstsq(W, data.y, rcond=None)
    residuals = data.y - W @ theta0
    return theta0, residuals


def select_support(residuals, margin_iqr: float = 0.5):
    """Initial log-hazard support: residual range padded by a fraction of the IQR."""
    q25, q75 = np.percentile(residuals, [25.0, 75.0])
    iqr = q75 - q25
    pad = margin_iqr * iqr if iqr > 0 else max(1.0, margin_iqr * np.std(residuals))
    return float(residuals.min() - pad), float(residuals.max() + pad)


def fit_dataset(data: SurvivalDataset, settings: FitSettings) -> FitResult:
    """Fit the sieve model to a dataset, widening the support on violation.

    Raises :class:`SupportViolationError` when the support cannot be made to
    cover the residuals within the allowed number of widenings, and
    :class:`~faft.inference.SingularInformationError` when the observed
    information at the optimum is singular.
    """
    beta_basis = settings.sieve.beta_basis()
    theta0, residuals = initial_values(data, beta_basis)
    a, b = select_support(residuals, settings.support_margin)
    pad0 = 0.5 * (b - a) - 0.5 * (residuals.max() - residuals.min())

    last_error = None
    for widening in range(settings.max_widenings + 1):
        g_basis = settings.sieve.g_basis(a, b)
        exposure = np.maximum(residuals - a, 0.0)
        events = data.delta.sum()
        c0 = float(np.log(max(events, 1.0) / exposure.sum()))
        x0 = np.concatenate([theta0, np.full(g_basis.dimension, c0)])
        obj = PackedObjective(data, beta_basis, g_basis)

        try:
            x_hat, trace = maximize(obj.value, obj.gradient, x0, settings.optimizer)
        except SupportViolationError as err:
            last_error = err
            a, b = _widen(a, b, pad0)
            continue

        if trace.termination == "support-violation":
            residuals = obj.residual_report(x_hat).residuals
            last_error = SupportViolationError(obj.residual_report(x_hat))
            a, b = _widen(min(a, residuals.min()), max(b, residuals.max()), pad0)
            continue

        grad_sup = float(np.abs(obj.gradient(x_hat)).max())
        if trace.termination != "gradient" and grad_sup > settings.stall_gradient_tol:
            # the line search stalled away from a stationary point, which in
            # practice means the maximizer is pinned against the support
            # boundary; give it room and refit
            last_error = RuntimeError(
                f"optimizer stalled with gradient sup-norm {grad_sup:.3g} on support [{a:.4g}, {b:.4g}]"
            )
            a, b = _widen(a, b, pad0)
            continue

        params = obj.params(x_hat)
        try:
            hessian = observed_hessian(data, params, stationarity_warn_tol=np.inf)
        except SupportViolationError as err:
            last_error = err
            a, b = _widen(a, b, pad0)
            continue

        check_sieve_bound(x_hat, settings.coef_bound, label="packed sieve")
        fit = FitResult(
            params=params,
            loglik=obj.value(x_hat),
            hessian=hessian,
            alpha_se=np.full(data.p, np.nan),
            trace=trace,
            support=(a, b),
            n_records=data.n,
            centering=data.centering,
            fingerprint=dataset_fingerprint(data),
            support_widenings=widening,
        )
        fit.alpha_se = alpha_standard_errors(fit)
        return fit

    raise last_error if last_error is not None else RuntimeError("fit failed without diagnostics")


def _widen(a: float, b: float, pad: float):
    extra = max(pad, 0.05 * (b - a))
    return a - extra, b + extra
