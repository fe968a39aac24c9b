"""Data model and sieve log-likelihood for the functional AFT model.

The linear predictor of a record is ``mu = alpha'X + int b(s)Z(s) ds`` and
the averaged log-likelihood over ``n`` records is

    (1/n) sum_i [ Delta_i g(r_i) - int_a^{min(r_i, b)} exp(g(t)) dt ],

with residual ``r_i = Y_i - mu_i`` and ``g`` the log-hazard spline on its
support ``[a, b]``.  Residuals above ``b``, or event residuals below ``a``,
raise :class:`SupportViolationError`; the caller widens the support.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from faft._backend import kernels
from faft.splinecore import (
    GL_NODES,
    GL_WEIGHTS,
    SplineBasis,
    SplineFunction,
    SplineOrderError,
)

#: Panel width cap for quadrature against analytic covariates; fine enough
#: for the oscillatory eigen-expansion curves used in the simulations.
ANALYTIC_PANEL_WIDTH = 1.0 / 256.0


class FunctionalCovariate:
    """One subject's trajectory Z(.) on [0, 1]."""

    def value(self, s):
        raise NotImplementedError

    def inner_products(self, basis: SplineBasis) -> np.ndarray:
        """Integrals of Z against every basis function of ``basis``."""
        raise NotImplementedError


class AnalyticCovariate(FunctionalCovariate):
    """Trajectory given by a vectorized callable on [0, 1]."""

    def __init__(self, fn: Callable):
        self.fn = fn

    def value(self, s):
        return self.fn(np.asarray(s, dtype=float))

    def inner_products(self, basis: SplineBasis) -> np.ndarray:
        nodes, weights = _panel_rule(basis.breakpoints(), ANALYTIC_PANEL_WIDTH)
        design = basis.evaluate_many(nodes)
        return design.T @ (weights * self.value(nodes))


class GridCovariate(FunctionalCovariate):
    """Sampled trajectory, linearly interpolated and endpoint-clamped."""

    def __init__(self, points, values):
        points = np.asarray(points, dtype=float)
        values = np.asarray(values, dtype=float)
        if points.ndim != 1 or points.size < 2 or points.shape != values.shape:
            raise ValueError("grid covariate needs >= 2 matching points/values")
        if np.any(np.diff(points) <= 0):
            raise ValueError("grid points must be strictly increasing")
        if points[0] < 0.0 or points[-1] > 1.0:
            raise ValueError("grid points must lie in [0, 1]")
        self.points = points
        self.values = values

    def value(self, s):
        return np.interp(np.asarray(s, dtype=float), self.points, self.values)

    def inner_products(self, basis: SplineBasis) -> np.ndarray:
        # split at both knot and grid breakpoints: the integrand is a plain
        # polynomial on each segment, so the per-segment rule is exact
        brk = np.unique(np.concatenate([basis.breakpoints(), self.points, [0.0, 1.0]]))
        brk = brk[(brk >= basis.lower) & (brk <= basis.upper)]
        nodes, weights = _segment_rule(brk)
        design = basis.evaluate_many(nodes)
        return design.T @ (weights * self.value(nodes))


def _segment_rule(breakpoints):
    """Gauss-Legendre nodes/weights for each segment between breakpoints."""
    lo = breakpoints[:-1]
    hi = breakpoints[1:]
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * GL_NODES[None, :]
    weights = half[:, None] * GL_WEIGHTS[None, :]
    return nodes.ravel(), weights.ravel()


def _panel_rule(breakpoints, max_width):
    """Segment rule after subdividing wide segments below ``max_width``."""
    pieces = [np.asarray([breakpoints[0]])]
    for lo, hi in zip(breakpoints[:-1], breakpoints[1:]):
        k = max(1, int(np.ceil((hi - lo) / max_width)))
        pieces.append(np.linspace(lo, hi, k + 1)[1:])
    return _segment_rule(np.concatenate(pieces))


@dataclass(frozen=True)
class CenteringInfo:
    """Shifts already applied to the covariates, kept for de-centering."""

    x_means: np.ndarray
    z_mean: Optional[FunctionalCovariate] = None


class Record(NamedTuple):
    y: float
    delta: int
    x: np.ndarray
    z: FunctionalCovariate


class SurvivalDataset:
    """Right-censored records after the monotone time transform."""

    def __init__(self, y, delta, x, covariates, centering: Optional[CenteringInfo] = None):
        self.y = np.asarray(y, dtype=float)
        self.delta = np.asarray(delta, dtype=float)
        self.x = np.asarray(x, dtype=float)
        self.covariates = list(covariates)
        n = self.y.size
        if self.delta.shape != (n,) or self.x.shape[0] != n or len(self.covariates) != n:
            raise ValueError("record arrays must share the same length")
        if not np.all(np.isin(self.delta, (0.0, 1.0))):
            raise ValueError("event indicators must be 0 or 1")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("scalar covariates must be finite")
        self.centering = centering if centering is not None else CenteringInfo(np.zeros(self.x.shape[1]))

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def record(self, i: int) -> Record:
        return Record(float(self.y[i]), int(self.delta[i]), self.x[i], self.covariates[i])

    def functional_design(self, basis: SplineBasis) -> np.ndarray:
        return np.vstack([z.inner_products(basis) for z in self.covariates])


@dataclass(frozen=True)
class SieveParameters:
    """Packed state (alpha, gamma_beta, gamma_g) with its two bases."""

    alpha: np.ndarray
    beta: SplineFunction
    loghaz: SplineFunction

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))

    @property
    def support(self):
        return (self.loghaz.basis.lower, self.loghaz.basis.upper)

    @property
    def packed(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.beta.coefficients, self.loghaz.coefficients])

    @property
    def dimension(self) -> int:
        return self.alpha.size + self.beta.basis.dimension + self.loghaz.basis.dimension

    @classmethod
    def from_packed(cls, x, p, beta_basis: SplineBasis, g_basis: SplineBasis):
        x = np.asarray(x, dtype=float)
        qb = beta_basis.dimension
        if x.size != p + qb + g_basis.dimension:
            raise ValueError(f"packed vector length {x.size} does not match p={p}, bases ({qb}, {g_basis.dimension})")
        return cls(x[:p], SplineFunction(beta_basis, x[p : p + qb]), SplineFunction(g_basis, x[p + qb :]))


@dataclass(frozen=True)
class ResidualReport:
    residuals: np.ndarray
    support: tuple
    n_below: int
    n_above: int

    def __str__(self):
        a, b = self.support
        return (f"{self.n_below} residual(s) below {a:.6g} and {self.n_above} above {b:.6g} "
                f"(range [{self.residuals.min():.6g}, {self.residuals.max():.6g}])")


class SupportViolationError(RuntimeError):
    """A residual fell outside the log-hazard support; widen [a, b]."""

    def __init__(self, report: ResidualReport):
        super().__init__(f"log-hazard support violated: {report}")
        self.report = report


def mu(record: Record, params: SieveParameters) -> float:
    """Linear predictor alpha'X + int beta(s) Z(s) ds for one record."""
    if record.x.shape != params.alpha.shape:
        raise ValueError(f"scalar covariate length {record.x.size} does not match alpha length {params.alpha.size}")
    functional = float(record.z.inner_products(params.beta.basis) @ params.beta.coefficients)
    return float(params.alpha @ record.x) + functional


class PackedObjective:
    """Log-likelihood and gradient as functions of the packed vector.

    Precomputes the linear-predictor design matrix once, so repeated calls
    during optimization touch only the hot kernel.
    """

    def __init__(self, data: SurvivalDataset, beta_basis: SplineBasis, g_basis: SplineBasis):
        self.data = data
        self.beta_basis = beta_basis
        self.g_basis = g_basis
        self.p = data.p
        self.W = np.ascontiguousarray(
            np.hstack([data.x, data.functional_design(beta_basis)])
        )
        self.n_theta = self.W.shape[1]
        self.dimension = self.n_theta + g_basis.dimension

    def params(self, x) -> SieveParameters:
        return SieveParameters.from_packed(x, self.p, self.beta_basis, self.g_basis)

    def _kernel(self, x):
        x = np.ascontiguousarray(x, dtype=float)
        theta = x[: self.n_theta]
        gg = x[self.n_theta :]
        ll, grad, n_below, n_above, n_event_oob = kernels.loglik_grad(
            self.W, self.data.y, self.data.delta, theta,
            self.g_basis.extended, self.g_basis.order, gg, GL_NODES, GL_WEIGHTS,
        )
        if n_above > 0 or n_event_oob > 0:
            raise SupportViolationError(self.residual_report(x))
        return float(ll), np.asarray(grad)

    def residual_report(self, x) -> ResidualReport:
        x = np.asarray(x, dtype=float)
        r = self.data.y - self.W @ x[: self.n_theta]
        a, b = self.g_basis.lower, self.g_basis.upper
        return ResidualReport(r, (a, b), int((r < a).sum()), int((r > b).sum()))

    def value(self, x) -> float:
        return self._kernel(x)[0]

    def gradient(self, x) -> np.ndarray:
        return self._kernel(x)[1]

    def value_and_grad(self, x):
        return self._kernel(x)


def log_likelihood(data: SurvivalDataset, params: SieveParameters) -> float:
    obj = PackedObjective(data, params.beta.basis, params.loghaz.basis)
    return obj.value(params.packed)


def gradient(data: SurvivalDataset, params: SieveParameters) -> np.ndarray:
    """Analytic gradient of the averaged log-likelihood, packed ordering."""
    if params.loghaz.basis.order < 2:
        raise SplineOrderError("gradient needs a log-hazard spline of order >= 2")
    obj = PackedObjective(data, params.beta.basis, params.loghaz.basis)
    return obj.gradient(params.packed)


def residual_report(data: SurvivalDataset, params: SieveParameters) -> ResidualReport:
    obj = PackedObjective(data, params.beta.basis, params.loghaz.basis)
    return obj.residual_report(params.packed)
