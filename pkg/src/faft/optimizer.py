"""Quasi-Newton maximization of the sieve log-likelihood.

Dense BFGS with a strong-Wolfe line search; the packed parameter is small
(around a dozen entries at the sample sizes of interest) so dense
inverse-Hessian updates are cheap.  The objective may raise
:class:`~faft.likelihood.SupportViolationError` at a trial point; such steps
are rejected and the search backs off, and if no admissible step remains the
run terminates with reason ``"support-violation"`` so the caller can widen
the log-hazard support and refit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from faft.likelihood import SupportViolationError


class InitializationError(ValueError):
    """Objective not finite at the starting point."""


@dataclass(frozen=True)
class OptimizerConfig:
    gradient_tol: float = 1e-6
    step_tol: float = 1e-9
    max_iterations: int = 500
    sufficient_decrease: float = 1e-4
    curvature: float = 0.9
    max_restarts: int = 3

    def __post_init__(self):
        if min(self.gradient_tol, self.step_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.sufficient_decrease < self.curvature < 1:
            raise ValueError("need 0 < sufficient_decrease < curvature < 1")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    grad_sup_norm: float
    step_length: float


@dataclass
class OptimizerTrace:
    iterations: list = field(default_factory=list)
    termination: str = "max-iter"
    support_violations: int = 0

    def record(self, iteration, objective, grad_sup_norm, step_length):
        self.iterations.append(IterationRecord(iteration, objective, grad_sup_norm, step_length))

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)


class _Evaluator:
    """Negates the objective for minimization and absorbs support violations."""

    def __init__(self, objective, gradient, trace):
        self.objective = objective
        self.gradient = gradient
        self.trace = trace

    def f(self, x):
        try:
            return -self.objective(x)
        except SupportViolationError:
            self.trace.support_violations += 1
            return np.inf

    def g(self, x):
        return -np.asarray(self.gradient(x))


def _zoom(ev, x, p, f0, df0, c1, c2, a_lo, a_hi, f_lo, max_iter=50):
    """Strong-Wolfe zoom by bisection on a bracketing interval."""
    for _ in range(max_iter):
        a = 0.5 * (a_lo + a_hi)
        fa = ev.f(x + a * p)
        if not np.isfinite(fa) or fa > f0 + c1 * a * df0 or fa >= f_lo:
            a_hi = a
        else:
            ga = ev.g(x + a * p)
            dfa = float(ga @ p)
            if abs(dfa) <= -c2 * df0:
                return a, fa, ga
            if dfa * (a_hi - a_lo) >= 0:
                a_hi = a_lo
            a_lo, f_lo = a, fa
        if abs(a_hi - a_lo) < 1e-16:
            break
    if np.isfinite(f_lo) and f_lo < f0 and a_lo > 0:
        # acceptable decrease even though the curvature test never latched
        return a_lo, f_lo, ev.g(x + a_lo * p)
    return None


def _line_search(ev, x, p, f0, g0, c1, c2):
    """Strong-Wolfe search along p; returns (alpha, f, g) or None."""
    df0 = float(g0 @ p)
    if df0 >= 0:
        return None
    a_prev, f_prev = 0.0, f0
    a = 1.0
    for i in range(25):
        fa = ev.f(x + a * p)
        if not np.isfinite(fa) or fa > f0 + c1 * a * df0 or (i > 0 and fa >= f_prev):
            return _zoom(ev, x, p, f0, df0, c1, c2, a_prev, a, f_prev)
        ga = ev.g(x + a * p)
        dfa = float(ga @ p)
        if abs(dfa) <= -c2 * df0:
            return a, fa, ga
        if dfa >= 0:
            return _zoom(ev, x, p, f0, df0, c1, c2, a, a_prev, fa)
        a_prev, f_prev = a, fa
        a *= 2.0
    return None


def maximize(objective, gradient, init, config: OptimizerConfig = OptimizerConfig()):
    """BFGS ascent of ``objective`` from ``init``.

    Returns ``(x, trace)`` with the last accepted iterate.  Deterministic
    given its inputs.
    """
    x = np.asarray(init, dtype=float).copy()
    trace = OptimizerTrace()
    ev = _Evaluator(objective, gradient, trace)

    f = ev.f(x)
    if not np.isfinite(f):
        raise InitializationError("objective is not finite at the initial point")
    g = ev.g(x)
    dim = x.size
    identity = np.eye(dim)
    H = identity.copy()
    restarts = 0
    first_update = True

    trace.record(0, -f, float(np.abs(g).max()), 0.0)
    for it in range(1, config.max_iterations + 1):
        gnorm = float(np.abs(g).max())
        if gnorm < config.gradient_tol:
            trace.termination = "gradient"
            break

        p = -H @ g
        result = _line_search(ev, x, p, f, g, config.sufficient_decrease, config.curvature)
        if result is None:
            if restarts < config.max_restarts:
                # discard curvature information and retry along the gradient
                restarts += 1
                H = identity.copy()
                first_update = True
                p = -g
                result = _line_search(ev, x, p, f, g, config.sufficient_decrease, config.curvature)
            if result is None:
                trace.termination = (
                    "support-violation" if trace.support_violations > 0 else "step"
                )
                break

        alpha, f_new, g_new = result
        s = alpha * p
        y = g_new - g
        x = x + s
        step_len = float(np.abs(s).max())
        f, g = f_new, g_new
        trace.record(it, -f, float(np.abs(g).max()), step_len)

        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if first_update:
                H = (sy / float(y @ y)) * identity
                first_update = False
            rho = 1.0 / sy
            V = identity - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)

        if step_len < config.step_tol:
            trace.termination = "step"
            break
    else:
        trace.termination = "max-iter"

    if trace.termination == "max-iter" and trace.n_iterations and float(np.abs(g).max()) < config.gradient_tol:
        trace.termination = "gradient"
    return x, trace
