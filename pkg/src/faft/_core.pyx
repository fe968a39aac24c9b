# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: B-spline evaluation, exp-spline quadrature and the
censored-data log-likelihood/gradient loop.

Mirrors the interface of ``faft._kernels_py`` (the pure-numpy fallback).
"""

from libc.math cimport exp

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "compiled"

DEF MAX_ORDER = 12


cdef int _find_span(const double[::1] tk, int order, int q, double t) noexcept nogil:
    """Index i with tk[i] <= t < tk[i+1]; the upper endpoint maps to q-1."""
    cdef int lo, hi, mid
    if t >= tk[q]:
        return q - 1
    lo = order - 1
    hi = q
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if t < tk[mid]:
            hi = mid
        else:
            lo = mid
    return lo


cdef void _basis_funs(const double[::1] tk, int span, double t, int degree,
                      double* out) noexcept nogil:
    """Nonzero basis values at t (Cox-de Boor); out has degree+1 entries for
    basis indices span-degree .. span."""
    cdef double left[MAX_ORDER]
    cdef double right[MAX_ORDER]
    cdef double saved, temp
    cdef int j, r
    out[0] = 1.0
    for j in range(1, degree + 1):
        left[j] = t - tk[span + 1 - j]
        right[j] = tk[span + j] - t
        saved = 0.0
        for r in range(j):
            temp = out[r] / (right[r + 1] + left[j - r])
            out[r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        out[j] = saved


def basis_row(const double[::1] tk, int order, int q, double t):
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(q)
    cdef double vals[MAX_ORDER]
    cdef int span = _find_span(tk, order, q, t)
    cdef int k
    _basis_funs(tk, span, t, order - 1, vals)
    for k in range(order):
        out[span - order + 1 + k] = vals[k]
    return out


def design_matrix(const double[::1] tk, int order, int q, ts):
    cdef cnp.ndarray[double, ndim=1] pts = np.ascontiguousarray(
        np.atleast_1d(ts), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] out = np.zeros((pts.shape[0], q))
    cdef double[:, ::1] o = out
    cdef double[::1] p = pts
    cdef double vals[MAX_ORDER]
    cdef int i, k, span
    cdef Py_ssize_t npts = pts.shape[0]
    with nogil:
        for i in range(npts):
            span = _find_span(tk, order, q, p[i])
            _basis_funs(tk, span, p[i], order - 1, vals)
            for k in range(order):
                o[i, span - order + 1 + k] = vals[k]
    return out


def quad_exp_basis(const double[::1] tk, int order, int q,
                   const double[::1] coef, double u,
                   const double[::1] glx, const double[::1] glw):
    """Integrals of exp(spline) and exp(spline)*basis from the lower knot to u."""
    cdef cnp.ndarray[double, ndim=1] vec = np.zeros(q)
    cdef double[::1] v = vec
    cdef double total = 0.0
    cdef double a = tk[order - 1]
    cdef double b = tk[q]
    cdef double lo, hi, half, node, eg, dot
    cdef double vals[MAX_ORDER]
    cdef int m, g, k, span
    cdef int G = glx.shape[0]
    if u <= a:
        return 0.0, vec
    if u > b:
        u = b
    with nogil:
        for m in range(order - 1, q):
            lo = tk[m]
            hi = tk[m + 1]
            if hi <= lo:
                continue
            if hi > u:
                hi = u
            half = 0.5 * (hi - lo)
            for g in range(G):
                node = 0.5 * (hi + lo) + half * glx[g]
                span = _find_span(tk, order, q, node)
                _basis_funs(tk, span, node, order - 1, vals)
                dot = 0.0
                for k in range(order):
                    dot += vals[k] * coef[span - order + 1 + k]
                eg = exp(dot) * half * glw[g]
                total += eg
                for k in range(order):
                    v[span - order + 1 + k] += eg * vals[k]
            if hi >= u:
                break
    return total, vec


def loglik_grad(const double[:, ::1] W, const double[::1] Y,
                const double[::1] delta, const double[::1] theta,
                const double[::1] tk, int order, const double[::1] gg,
                const double[::1] glx, const double[::1] glw):
    """Averaged log-likelihood, analytic gradient and out-of-support counts.

    See ``faft._kernels_py.loglik_grad`` for the contract.
    """
    cdef Py_ssize_t n = Y.shape[0]
    cdef int P = W.shape[1]
    cdef int qg = gg.shape[0]
    cdef int G = glx.shape[0]
    cdef int M = qg - order + 1          # knot spans of the g-spline
    cdef double a = tk[order - 1]
    cdef double b = tk[qg]

    cdef cnp.ndarray[double, ndim=1] grad = np.zeros(P + qg)
    cdef double[::1] gr = grad
    cdef cnp.ndarray[double, ndim=1] pref_scalar = np.zeros(M + 1)
    cdef cnp.ndarray[double, ndim=2] pref_vec = np.zeros((M + 1, qg))
    cdef double[::1] ps = pref_scalar
    cdef double[:, ::1] pv = pref_vec
    cdef cnp.ndarray[double, ndim=1] dcoef_arr = np.zeros(qg - 1 if qg > 1 else 0)
    cdef double[::1] dcoef = dcoef_arr
    cdef const double[::1] dtk = tk[1:qg + order - 1]

    cdef double ll = 0.0
    cdef double lo, hi, half, node, eg, dot, r, u, gval, gdot, phi, risk
    cdef double vals[MAX_ORDER]
    cdef int m, g, k, span, i, j
    cdef int n_below = 0, n_above = 0, n_event_oob = 0
    cdef bint is_event, inside

    if order >= 2:
        for k in range(qg - 1):
            dcoef[k] = (order - 1) * (gg[k + 1] - gg[k]) / (tk[k + order] - tk[k + 1])

    with nogil:
        # per-span integrals of exp(g), shared by all records
        for m in range(M):
            lo = tk[order - 1 + m]
            hi = tk[order + m]
            half = 0.5 * (hi - lo)
            ps[m + 1] = ps[m]
            for k in range(qg):
                pv[m + 1, k] = pv[m, k]
            for g in range(G):
                node = 0.5 * (hi + lo) + half * glx[g]
                span = order - 1 + m
                _basis_funs(tk, span, node, order - 1, vals)
                dot = 0.0
                for k in range(order):
                    dot += vals[k] * gg[span - order + 1 + k]
                eg = exp(dot) * half * glw[g]
                ps[m + 1] += eg
                for k in range(order):
                    pv[m + 1, span - order + 1 + k] += eg * vals[k]

        for i in range(n):
            r = Y[i]
            for k in range(P):
                r -= W[i, k] * theta[k]
            is_event = delta[i] > 0.0
            inside = (r >= a) and (r <= b)
            if r < a:
                n_below += 1
            elif r > b:
                n_above += 1
            if is_event and not inside:
                n_event_oob += 1

            # risk-set integral over [a, min(r, b)]
            u = r if r < b else b
            risk = 0.0
            if u > a:
                j = _find_span(tk, order, qg, u) - (order - 1)
                risk = ps[j]
                for k in range(qg):
                    gr[P + k] -= pv[j, k] / n
                lo = tk[order - 1 + j]
                half = 0.5 * (u - lo)
                for g in range(G):
                    node = 0.5 * (u + lo) + half * glx[g]
                    span = _find_span(tk, order, qg, node)
                    _basis_funs(tk, span, node, order - 1, vals)
                    dot = 0.0
                    for k in range(order):
                        dot += vals[k] * gg[span - order + 1 + k]
                    eg = exp(dot) * half * glw[g]
                    risk += eg
                    for k in range(order):
                        gr[P + span - order + 1 + k] -= eg * vals[k] / n
            ll -= risk

            # terms at the residual itself (clamped outside the support)
            node = r
            if node < a:
                node = a
            elif node > b:
                node = b
            span = _find_span(tk, order, qg, node)
            _basis_funs(tk, span, node, order - 1, vals)
            gval = 0.0
            for k in range(order):
                gval += vals[k] * gg[span - order + 1 + k]
            if is_event:
                ll += gval
                for k in range(order):
                    gr[P + span - order + 1 + k] += vals[k] / n
            phi = 0.0
            if inside:
                phi = exp(gval)
            if is_event and order >= 2:
                span = _find_span(dtk, order - 1, qg - 1, node)
                _basis_funs(dtk, span, node, order - 2, vals)
                gdot = 0.0
                for k in range(order - 1):
                    gdot += vals[k] * dcoef[span - order + 2 + k]
                phi -= gdot
            if phi != 0.0:
                for k in range(P):
                    gr[k] += phi * W[i, k] / n

    return ll / n, grad, n_below, n_above, n_event_oob
