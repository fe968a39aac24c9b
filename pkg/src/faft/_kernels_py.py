"""Pure-numpy implementations of the hot numerical kernels.

This module mirrors the interface of the compiled extension ``faft._core``
and is selected at import time when the extension is unavailable (see
``faft._backend``).  All routines work on a clamped B-spline knot vector
``tk`` of length ``q + order`` (endpoint knots repeated ``order`` times)
and are deterministic.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def design_matrix(tk, order, q, ts):
    """Evaluate all ``q`` B-spline basis functions at each point of ``ts``.

    Uses the Cox-de Boor recursion vectorized over evaluation points.
    Points must lie in ``[tk[order-1], tk[q]]``; the value at the upper
    endpoint is the left limit.
    """
    tk = np.asarray(tk, dtype=float)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    upper = tk[q]
    # order-0 (piecewise constant) seed: indicator of the half-open span
    b = ((ts[:, None] >= tk[None, :-1]) & (ts[:, None] < tk[None, 1:])).astype(float)
    at_upper = ts >= upper
    if np.any(at_upper):
        b[at_upper, :] = 0.0
        b[at_upper, q - 1] = 1.0
    for k in range(1, order):
        denom1 = tk[k:-1] - tk[: -k - 1]
        denom2 = tk[k + 1:] - tk[1:-k]
        with np.errstate(divide="ignore", invalid="ignore"):
            w1 = np.where(denom1 > 0.0, (ts[:, None] - tk[None, : -k - 1]) / denom1, 0.0)
            w2 = np.where(denom2 > 0.0, (tk[None, k + 1:] - ts[:, None]) / denom2, 0.0)
        b = w1 * b[:, :-1] + w2 * b[:, 1:]
    return b[:, :q]


def basis_row(tk, order, q, t):
    return design_matrix(tk, order, q, [t])[0]


def _deriv_coefficients(tk, order, coef):
    """Coefficients of the derivative spline (order drops by one)."""
    tk = np.asarray(tk, dtype=float)
    coef = np.asarray(coef, dtype=float)
    denom = tk[order:-1] - tk[1:-order]
    return (order - 1) * (coef[1:] - coef[:-1]) / denom


def quad_exp_basis(tk, order, q, coef, u, glx, glw):
    """Gauss-Legendre quadrature of exp(spline) and exp(spline) * basis.

    Integrates from the lower knot to ``u`` span by span, splitting the
    span containing ``u``.  Returns ``(scalar, vector)`` where the vector
    holds one weighted-basis integral per coefficient index.  ``u`` at or
    below the lower knot yields zeros.
    """
    tk = np.asarray(tk, dtype=float)
    coef = np.asarray(coef, dtype=float)
    a = tk[order - 1]
    b = tk[q]
    if u <= a:
        return 0.0, np.zeros(q)
    u = min(u, b)
    brk = tk[order - 1 : q + 1]
    total = 0.0
    vec = np.zeros(q)
    for m in range(brk.size - 1):
        lo = brk[m]
        hi = min(brk[m + 1], u)
        if hi <= lo:
            break
        half = 0.5 * (hi - lo)
        nodes = 0.5 * (hi + lo) + half * glx
        bn = design_matrix(tk, order, q, nodes)
        eg = np.exp(bn @ coef) * (half * glw)
        total += eg.sum()
        vec += bn.T @ eg
    return total, vec


def loglik_grad(W, Y, delta, theta, tk, order, gg, glx, glw):
    """Censored-data log-likelihood and analytic gradient, averaged over records.

    ``W`` is the per-record design matrix for the linear predictor (scalar
    covariates followed by functional-covariate basis inner products), so the
    residual of record ``i`` is ``Y[i] - W[i] @ theta``.  ``gg`` holds the
    log-hazard spline coefficients on the clamped knot vector ``tk``.

    Returns ``(loglik, grad, n_below, n_above, n_event_outside)`` where the
    counts describe residuals outside the spline support ``[a, b]``.  The
    caller decides whether out-of-support residuals are an error; values are
    computed with the risk interval capped at ``[a, b]`` regardless.
    """
    W = np.asarray(W, dtype=float)
    Y = np.asarray(Y, dtype=float)
    delta = np.asarray(delta, dtype=float)
    theta = np.asarray(theta, dtype=float)
    gg = np.asarray(gg, dtype=float)
    tk = np.asarray(tk, dtype=float)
    n = Y.size
    qg = gg.size
    G = glx.size
    a = tk[order - 1]
    b = tk[qg]
    brk = tk[order - 1 : qg + 1]
    M = brk.size - 1

    # per-span integrals of exp(g) shared by every record, plus prefix sums
    half_f = 0.5 * np.diff(brk)
    nodes_f = (0.5 * (brk[1:] + brk[:-1]))[:, None] + half_f[:, None] * glx[None, :]
    bn_f = design_matrix(tk, order, qg, nodes_f.ravel())
    w_f = (half_f[:, None] * glw[None, :]).ravel()
    eg_f = np.exp(bn_f @ gg) * w_f
    pref_scalar = np.concatenate(([0.0], np.cumsum(eg_f.reshape(M, G).sum(axis=1))))
    pref_vec = np.vstack(
        [np.zeros(qg), np.cumsum((bn_f * eg_f[:, None]).reshape(M, G, qg).sum(axis=1), axis=0)]
    )

    r = Y - W @ theta
    below = r < a
    above = r > b
    inside = ~below & ~above
    events = delta > 0.0
    n_event_oob = int(np.count_nonzero(events & ~inside))

    # risk-set integral up to min(r, b), split at the span containing it
    u = np.minimum(r, b)
    active = u > a
    j = np.clip(np.searchsorted(brk, u, side="right") - 1, 0, M - 1)
    left = brk[j]
    half_p = np.where(active, 0.5 * (u - left), 0.0)
    nodes_p = (0.5 * (u + left))[:, None] + half_p[:, None] * glx[None, :]
    bn_p = design_matrix(tk, order, qg, np.clip(nodes_p.ravel(), a, b))
    w_p = (half_p[:, None] * glw[None, :]).ravel()
    eg_p = np.exp(bn_p @ gg) * w_p
    risk_scalar = np.where(active, pref_scalar[j] + eg_p.reshape(n, G).sum(axis=1), 0.0)
    risk_vec = np.where(
        active[:, None],
        pref_vec[j] + (bn_p * eg_p[:, None]).reshape(n, G, qg).sum(axis=1),
        0.0,
    )

    # event and boundary terms at the residuals
    r_cl = np.clip(r, a, b)
    bn_r = design_matrix(tk, order, qg, r_cl)
    g_r = bn_r @ gg
    if order >= 2:
        dcoef = _deriv_coefficients(tk, order, gg)
        bn_dr = design_matrix(tk[1:-1], order - 1, qg - 1, r_cl)
        gdot_r = bn_dr @ dcoef
    else:
        # piecewise-constant g: derivative vanishes almost everywhere
        gdot_r = np.zeros(n)

    ll = float(np.sum(delta * g_r - risk_scalar) / n)
    phi = inside * np.exp(g_r) - delta * gdot_r
    grad = np.empty(W.shape[1] + qg)
    grad[: W.shape[1]] = W.T @ phi / n
    grad[W.shape[1]:] = (delta[:, None] * bn_r - risk_vec).sum(axis=0) / n
    return ll, grad, int(below.sum()), int(above.sum()), n_event_oob
