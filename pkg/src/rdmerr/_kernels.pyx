# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled bandwidth sweep: one pass of cumulative moments per side,
then O(1) work per candidate bandwidth. Same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, NAN

from ._kernels_py import refine_side_var

cnp.import_array()

cdef double VAR_FLOOR = 1e-11


cdef void _side(const double[:] xs, const double[:] vs, const double[:] hc,
                double[:] a_out, double[:] var_out, double[:] curv_out,
                long[:] k_out, long[:] d_out) noexcept nogil:
    # xs sorted by |x| ascending; hc sorted ascending
    cdef Py_ssize_t n = xs.shape[0], m = hc.shape[0]
    cdef Py_ssize_t i = 0, c
    cdef double p0 = 0, p1 = 0, p2 = 0, p3 = 0, p4 = 0
    cdef double q0 = 0, q1 = 0, q2 = 0, q3 = 0
    cdef double r0 = 0, r1 = 0, r2 = 0
    cdef double xi, vi, x2, v2, d, a, b, A0, A1, A2, meat, size
    cdef double prev = -1.0
    cdef long distinct = 0
    for c in range(m):
        while i < n and fabs(xs[i]) <= hc[c]:
            xi = xs[i]
            vi = vs[i]
            x2 = xi * xi
            v2 = vi * vi
            p0 += 1.0
            p1 += xi
            p2 += x2
            p3 += x2 * xi
            p4 += x2 * x2
            q0 += vi
            q1 += vi * xi
            q2 += vi * x2
            q3 += vi * x2 * xi
            r0 += v2
            r1 += v2 * xi
            r2 += v2 * x2
            if fabs(xi) != prev:
                distinct += 1
                prev = fabs(xi)
            i += 1
        k_out[c] = <long>i
        d_out[c] = distinct
        d = p0 * p2 - p1 * p1
        if distinct < 2 or d == 0.0:
            a_out[c] = NAN
            var_out[c] = NAN
            curv_out[c] = NAN
            continue
        a = (p2 * q0 - p1 * q1) / d
        b = (p0 * q1 - p1 * q0) / d
        A0 = p2 * p2
        A1 = -2.0 * p2 * p1
        A2 = p1 * p1
        meat = (A0 * (r0 - 2.0 * a * q0 - 2.0 * b * q1 + a * a * p0 + 2.0 * a * b * p1 + b * b * p2)
                + A1 * (r1 - 2.0 * a * q1 - 2.0 * b * q2 + a * a * p1 + 2.0 * a * b * p2 + b * b * p3)
                + A2 * (r2 - 2.0 * a * q2 - 2.0 * b * q3 + a * a * p2 + 2.0 * a * b * p3 + b * b * p4))
        size = (fabs(A0) * (fabs(r0) + fabs(2.0 * a * q0) + fabs(2.0 * b * q1) + a * a * p0 + fabs(2.0 * a * b * p1) + b * b * p2)
                + fabs(A1) * (fabs(r1) + fabs(2.0 * a * q1) + fabs(2.0 * b * q2) + fabs(a * a * p1) + fabs(2.0 * a * b * p2) + fabs(b * b * p3))
                + fabs(A2) * (fabs(r2) + fabs(2.0 * a * q2) + fabs(2.0 * b * q3) + a * a * p2 + fabs(2.0 * a * b * p3) + b * b * p4))
        # expanded sums cancel when residuals vanish; treat that as exact zero
        if (i == 2 and distinct == 2) or fabs(meat) <= VAR_FLOOR * size:
            meat = 0.0
        a_out[c] = a
        var_out[c] = meat / (d * d)
        curv_out[c] = (p2 * p2 - p1 * p3) / d


def window_sweep(x, v, hs):
    """Local linear fits for every bandwidth in ``hs``; see ``_kernels_py``."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] va = np.ascontiguousarray(v, dtype=np.float64)
    hs_arr = np.ascontiguousarray(hs, dtype=np.float64)
    cdef Py_ssize_t m = hs_arr.shape[0]
    scale = float(np.max(np.abs(xa))) if xa.shape[0] else 1.0
    scale = scale or 1.0
    xc = xa / scale
    vc = va - (va.mean() if va.shape[0] else 0.0)
    horder = np.argsort(hs_arr, kind="stable")
    hc = np.ascontiguousarray(hs_arr[horder] / scale)

    res = {}
    for side, mask in (("L", xa < 0), ("R", xa >= 0)):
        xs = xc[mask]
        order = np.argsort(np.abs(xs), kind="stable")
        xs = np.ascontiguousarray(xs[order])
        vs = np.ascontiguousarray(vc[mask][order])
        a_out = np.empty(m)
        var_out = np.empty(m)
        curv_out = np.empty(m)
        k_out = np.empty(m, dtype=np.int_)
        d_out = np.empty(m, dtype=np.int_)
        _side(xs, vs, hc, a_out, var_out, curv_out, k_out, d_out)
        refine_side_var(xs, vs, k_out, d_out, var_out)
        res[side] = (a_out, var_out, curv_out, k_out, d_out)

    inv = np.empty(m, dtype=np.intp)
    inv[horder] = np.arange(m)
    aL, varL, curvL, kL, dL = (arr[inv] for arr in res["L"])
    aR, varR, curvR, kR, dR = (arr[inv] for arr in res["R"])
    ok = (dL >= 2) & (dR >= 2)
    nan = np.full(m, np.nan)
    estimate = np.where(ok, aR - aL, nan)
    var = np.where(ok, np.maximum(varL + varR, 0.0), nan)
    bias = np.where(ok, 0.5 * np.abs(curvL + curvR) * scale * scale, nan)
    return estimate, np.sqrt(var), bias, kL, kR, dL, dR
