"""B-spline substrate: knot sequences, basis evaluation, derivatives and
quadrature of exp(spline) integrands.

All bases are clamped (endpoint knots carry multiplicity ``order``) so a
basis on ``m`` interior knots has dimension ``m + order``.  Objects are
immutable after construction and safe to share across workers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from faft._backend import kernels

GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(10)

#: Default sieve coefficient bound; see ``check_sieve_bound``.
DEFAULT_COEF_BOUND = 1e3


class SplineDomainError(ValueError):
    """Evaluation point outside the knot interval."""


class SplineOrderError(ValueError):
    """Operation needs a higher spline order than the basis provides."""


@dataclass(frozen=True)
class KnotSequence:
    """Knot layout on ``[lower, upper]`` with strictly increasing interior knots."""

    lower: float
    upper: float
    interior: tuple
    order: int

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")
        if not self.lower < self.upper:
            raise ValueError(f"need lower < upper, got [{self.lower}, {self.upper}]")
        pts = (self.lower,) + tuple(self.interior) + (self.upper,)
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError(f"knots must be strictly increasing inside ({self.lower}, {self.upper}): {self.interior}")
        object.__setattr__(self, "interior", tuple(float(t) for t in self.interior))

    @classmethod
    def uniform(cls, lower, upper, n_interior, order):
        """Equally spaced interior knots, the only placement used here."""
        interior = tuple(np.linspace(lower, upper, n_interior + 2)[1:-1])
        return cls(float(lower), float(upper), interior, int(order))

    @property
    def dimension(self) -> int:
        return len(self.interior) + self.order


class SplineBasis:
    """Clamped B-spline basis on a knot sequence."""

    def __init__(self, knots: KnotSequence):
        self.knots = knots
        self.dimension = knots.dimension
        self.extended = np.concatenate(
            [
                np.full(knots.order, knots.lower),
                np.asarray(knots.interior, dtype=float),
                np.full(knots.order, knots.upper),
            ]
        )
        self.extended.flags.writeable = False

    @property
    def order(self) -> int:
        return self.knots.order

    @property
    def lower(self) -> float:
        return self.knots.lower

    @property
    def upper(self) -> float:
        return self.knots.upper

    def key(self):
        return (self.lower, self.upper, self.knots.interior, self.order)

    def __eq__(self, other):
        return isinstance(other, SplineBasis) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return (f"SplineBasis(order={self.order}, dim={self.dimension}, "
                f"interval=[{self.lower}, {self.upper}])")

    def _check_domain(self, t: float):
        if not (self.lower <= t <= self.upper):
            raise SplineDomainError(
                f"evaluation point {t} outside the knot interval [{self.lower}, {self.upper}]"
            )

    def evaluate(self, t: float) -> np.ndarray:
        """All basis values at ``t``; at most ``order`` entries are nonzero."""
        self._check_domain(t)
        return np.asarray(kernels.basis_row(self.extended, self.order, self.dimension, float(t)))

    def evaluate_many(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if ts.size and (ts.min() < self.lower or ts.max() > self.upper):
            bad = ts[(ts < self.lower) | (ts > self.upper)][0]
            raise SplineDomainError(
                f"evaluation point {bad} outside the knot interval [{self.lower}, {self.upper}]"
            )
        return np.asarray(kernels.design_matrix(self.extended, self.order, self.dimension, ts))

    def greville(self) -> np.ndarray:
        """Greville abscissae; interpolating t -> t through them reproduces the line."""
        if self.order < 2:
            raise SplineOrderError("Greville abscissae need order >= 2")
        tk = self.extended
        return np.array(
            [tk[i + 1 : i + self.order].mean() for i in range(self.dimension)]
        )

    def breakpoints(self) -> np.ndarray:
        return np.concatenate(([self.lower], self.knots.interior, [self.upper]))


@dataclass(frozen=True)
class SplineFunction:
    """A spline as basis plus coefficient vector."""

    basis: SplineBasis
    coefficients: np.ndarray = field(default=None)

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float)
        if coef.shape != (self.basis.dimension,):
            raise ValueError(
                f"coefficient length {coef.shape} does not match basis dimension {self.basis.dimension}"
            )
        coef = coef.copy()
        coef.flags.writeable = False
        object.__setattr__(self, "coefficients", coef)

    def __call__(self, t):
        return evaluate_spline(self, t)


def evaluate_basis(basis: SplineBasis, t: float) -> np.ndarray:
    return basis.evaluate(t)


def evaluate_spline(f: SplineFunction, t):
    if np.isscalar(t):
        return float(f.basis.evaluate(t) @ f.coefficients)
    return f.basis.evaluate_many(t) @ f.coefficients


def derivative_operator(basis: SplineBasis):
    """Differentiation as a linear map between coefficient spaces.

    Returns ``(lower, D)`` where ``lower`` is the order ``order - 1`` basis on
    the same interior knots and ``D`` maps coefficients to derivative
    coefficients, so the derivative design at points ``t`` is
    ``lower.evaluate_many(t) @ D``.
    """
    order = basis.order
    if order < 2:
        raise SplineOrderError("derivative of an order-1 (piecewise constant) spline is unsupported")
    tk = basis.extended
    q = basis.dimension
    scale = (order - 1) / (tk[order:-1] - tk[1:-order])
    D = np.zeros((q - 1, q))
    idx = np.arange(q - 1)
    D[idx, idx] = -scale
    D[idx, idx + 1] = scale
    lower = SplineBasis(KnotSequence(basis.lower, basis.upper, basis.knots.interior, order - 1))
    return lower, D


def derivative_spline(f: SplineFunction) -> SplineFunction:
    """Exact derivative as a spline of order ``order - 1`` on the same knots."""
    lower, D = derivative_operator(f.basis)
    return SplineFunction(lower, D @ f.coefficients)


def quad_exp_spline(g: SplineFunction, a: float, u: float) -> float:
    """Integral of exp(g) over ``[a, u]`` by per-span Gauss-Legendre quadrature.

    ``a`` must be the lower knot; ``u`` below ``a`` yields 0 (empty risk
    interval, counted by the caller).
    """
    return _quad_exp(g, a, u)[0]


def quad_weighted_basis(g: SplineFunction, a: float, u: float) -> np.ndarray:
    """Componentwise integrals of exp(g(t)) * b_k(t) over ``[a, u]``."""
    return _quad_exp(g, a, u)[1]


def _quad_exp(g: SplineFunction, a: float, u: float):
    basis = g.basis
    if a != basis.lower:
        raise ValueError(f"integration must start at the lower knot {basis.lower}, got {a}")
    if u > basis.upper:
        raise SplineDomainError(
            f"evaluation point {u} outside the knot interval [{basis.lower}, {basis.upper}]"
        )
    total, vec = kernels.quad_exp_basis(
        basis.extended, basis.order, basis.dimension, g.coefficients,
        float(u), GL_NODES, GL_WEIGHTS,
    )
    return float(total), np.asarray(vec)


def check_sieve_bound(coefficients, bound: float = DEFAULT_COEF_BOUND, label: str = "spline"):
    """Soft sieve box constraint: warn when sup-norm of the coefficients hits it."""
    sup = float(np.max(np.abs(coefficients))) if len(coefficients) else 0.0
    if sup > bound:
        warnings.warn(
            f"{label} coefficient sup-norm {sup:.3g} exceeds the sieve bound {bound:.3g}",
            RuntimeWarning,
            stacklevel=2,
        )
    return sup <= bound
