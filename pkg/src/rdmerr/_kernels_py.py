"""Pure NumPy implementation of the bandwidth sweep kernel.

Mirrors ``_kernels.pyx`` exactly; used when the compiled extension is not
available or ``RDMERR_PURE_PYTHON=1`` is set.
"""

import numpy as np

VAR_FLOOR = 1e-11


def _side_moments(xs, vs):
    # cumulative sums ordered by |x|; row k holds sums over the first k points
    n = xs.size
    P = np.zeros((5, n + 1))
    Q = np.zeros((4, n + 1))
    R = np.zeros((3, n + 1))
    xp = np.ones_like(xs)
    v2 = vs * vs
    for j in range(5):
        P[j, 1:] = np.cumsum(xp)
        if j < 4:
            Q[j, 1:] = np.cumsum(vs * xp)
        if j < 3:
            R[j, 1:] = np.cumsum(v2 * xp)
        xp = xp * xs
    return P, Q, R


def _distinct_cumcount(a):
    new = np.ones(a.size, dtype=np.int64)
    if a.size > 1:
        new[1:] = a[1:] != a[:-1]
    return np.concatenate([[0], np.cumsum(new)])


def _side_eval(P, Q, R, k, distinct):
    p0, p1, p2, p3, p4 = (P[j, k] for j in range(5))
    q0, q1, q2, q3 = (Q[j, k] for j in range(4))
    r0, r1, r2 = (R[j, k] for j in range(3))
    with np.errstate(divide="ignore", invalid="ignore"):
        d = p0 * p2 - p1 * p1
        a = (p2 * q0 - p1 * q1) / d
        b = (p0 * q1 - p1 * q0) / d
        A = (p2 * p2, -2.0 * p2 * p1, p1 * p1)
        Pj = (p0, p1, p2, p3, p4)
        Qj = (q0, q1, q2, q3)
        Rj = (r0, r1, r2)
        meat = np.zeros_like(d)
        size = np.zeros_like(d)
        for j in range(3):
            parts = (
                Rj[j],
                -2.0 * a * Qj[j],
                -2.0 * b * Qj[j + 1],
                a * a * Pj[j],
                2.0 * a * b * Pj[j + 1],
                b * b * Pj[j + 2],
            )
            meat += A[j] * sum(parts)
            size += np.abs(A[j]) * sum(np.abs(t) for t in parts)
        # expanded sums cancel when residuals vanish; treat that as exact zero
        exact = (k == 2) & (distinct == 2)
        meat = np.where(exact | (np.abs(meat) <= VAR_FLOOR * size), 0.0, meat)
        var = meat / (d * d)
        curv = (p2 * p2 - p1 * p3) / d
    return a, var, curv


SMALL_WINDOW = 20
# same round-off floor as the direct fit
RESID_FLOOR = 1e-12


def refine_side_var(xs, vs, k, d, var, small: int = SMALL_WINDOW):
    """Exact side variances for windows of at most ``small`` observations.

    Moment updates lose relative accuracy when a few points are fitted
    almost exactly; those windows are cheap to redo with a direct QR fit.
    ``xs``, ``vs`` are sorted by ``|x|`` and ``var`` is updated in place.
    """
    for kk in np.unique(k[(k <= small) & (d >= 2)]):
        X = np.column_stack([np.ones(kk), xs[:kk]])
        Q, R = np.linalg.qr(X)
        w = np.linalg.solve(R, Q.T)[0]
        e = vs[:kk] - Q @ (Q.T @ vs[:kk])
        if np.max(np.abs(e)) <= RESID_FLOOR * (1.0 + np.max(np.abs(vs[:kk]))):
            e = np.zeros_like(e)
        var[k == kk] = float(np.sum(w * w * e * e))
    return var


def window_sweep(x, v, hs):
    """Local linear fits for every bandwidth in ``hs``.

    Parameters
    ----------
    x : ndarray
        Cutoff-normalized running variable.
    v : ndarray
        Outcome.
    hs : ndarray
        Bandwidths (any order).

    Returns
    -------
    estimate, se, bias_unit : ndarray
        Jump estimate, EHW standard error, and worst-case bias for ``M = 1``.
        Entries are NaN where a side has fewer than two support points.
    n_left, n_right, s_left, s_right : ndarray of int
        In-window observation counts and distinct support counts per side.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    hs = np.asarray(hs, dtype=float)
    scale = float(np.max(np.abs(x))) if x.size else 1.0
    scale = scale or 1.0
    xc = x / scale
    vc = v - (v.mean() if v.size else 0.0)
    hc = hs / scale

    out = {}
    for side, mask in (("L", x < 0), ("R", x >= 0)):
        xs = xc[mask]
        order = np.argsort(np.abs(xs), kind="stable")
        xs = xs[order]
        a_abs = np.abs(xs)
        P, Q, R = _side_moments(xs, vc[mask][order])
        k = np.searchsorted(a_abs, hc, side="right")
        distinct = _distinct_cumcount(a_abs)[k]
        a, var, curv = _side_eval(P, Q, R, k, distinct)
        var = refine_side_var(xs, vc[mask][order], k, distinct, np.array(var, dtype=float))
        out[side] = (k, distinct, a, var, curv)

    kL, dL, aL, varL, curvL = out["L"]
    kR, dR, aR, varR, curvR = out["R"]
    ok = (dL >= 2) & (dR >= 2)
    nan = np.full(hs.shape, np.nan)
    with np.errstate(invalid="ignore"):
        estimate = np.where(ok, aR - aL, nan)
        var = np.where(ok, np.maximum(varL + varR, 0.0), nan)
        bias = np.where(ok, 0.5 * np.abs(curvL + curvR) * scale * scale, nan)
    return estimate, np.sqrt(var), bias, kL, kR, dL, dR


def pilot_variance_sweep(x, s2, hs):
    """Variance ``sum_i w_i(h)^2 s2_i`` of the local linear jump for every ``h``.

    ``s2`` holds per-observation (co)variance estimates; the same
    cumulative-moment scheme as :func:`window_sweep` gives O(1) work per
    bandwidth. Shared by both backends.
    """
    x = np.asarray(x, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    hs = np.asarray(hs, dtype=float)
    scale = (float(np.max(np.abs(x))) if x.size else 1.0) or 1.0
    xc, hc = x / scale, hs / scale
    total = np.zeros(hs.shape)
    for mask in (x < 0, x >= 0):
        xs = xc[mask]
        order = np.argsort(np.abs(xs), kind="stable")
        xs, ss = xs[order], s2[mask][order]
        P = np.zeros((3, xs.size + 1))
        S = np.zeros((3, xs.size + 1))
        xp = np.ones_like(xs)
        for j in range(3):
            P[j, 1:] = np.cumsum(xp)
            S[j, 1:] = np.cumsum(ss * xp)
            xp = xp * xs
        k = np.searchsorted(np.abs(xs), hc, side="right")
        p0, p1, p2 = P[:, k]
        with np.errstate(divide="ignore", invalid="ignore"):
            d = p0 * p2 - p1 * p1
            total = total + (p2 * p2 * S[0, k] - 2.0 * p1 * p2 * S[1, k] + p1 * p1 * S[2, k]) / (d * d)
    return total
