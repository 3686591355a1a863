"""Independent reference implementations used as test oracles.

None of these reuse package code paths: they solve the same problems by
different algorithms (dense normal equations, linear programming,
exhaustive enumeration, arbitrary-precision bisection).
"""

import itertools

import mpmath
import numpy as np
from scipy.optimize import linprog


def ols_jump_and_sandwich(x, v, h):
    """Local linear jump via normal equations, with an HC0 sandwich SE."""
    x, v = np.asarray(x, float), np.asarray(v, float)
    m = np.abs(x) <= h
    xw, vw = x[m], v[m]
    d = (xw >= 0).astype(float)
    X = np.column_stack([d, d * xw, np.ones_like(xw), xw])
    XtX_inv = np.linalg.inv(X.T @ X)
    beta = XtX_inv @ X.T @ vw
    u = vw - X @ beta
    meat = (X * u[:, None] ** 2).T @ X
    V = XtX_inv @ meat @ XtX_inv
    return beta[0], np.sqrt(V[0, 0])


def tsls(x, y, t, h):
    """2SLS of y on t with z = 1{x>=0} as instrument and side-specific slopes."""
    x, y, t = (np.asarray(a, float) for a in (x, y, t))
    m = np.abs(x) <= h
    x, y, t = x[m], y[m], t[m]
    z = (x >= 0).astype(float)
    W = np.column_stack([np.ones_like(x), x, z * x])
    X = np.column_stack([t, W])
    Z = np.column_stack([z, W])
    ZX_inv = np.linalg.inv(Z.T @ X)
    beta = ZX_inv @ Z.T @ y
    u = y - X @ beta
    meat = (Z * u[:, None] ** 2).T @ Z
    V = ZX_inv @ meat @ ZX_inv.T
    return beta[0], np.sqrt(V[0, 0])


def worst_case_bias_lp(weights, x, M, cells=2000):
    """Largest bias of sum(w_i f(x_i)) - jump over |f''| <= M, by LP.

    Writes the remainder after per-side linear terms as
    r(x) = int_0^|x| (|x| - s) c(s) ds and discretizes c into
    piecewise-constant cells bounded by [-M, M]. Cell edges include every
    data point, so the only discretization error comes from cells where
    the influence kernel changes sign; those zeros are added as edges
    too (the kernel is linear between data points), which makes the
    discretization exact.
    """
    x = np.asarray(x, float)
    w = np.asarray(weights, float)
    objective, bounds = [], []
    for side in (x < 0, x >= 0):
        u, ws = np.abs(x[side]), w[side]
        if u.size == 0:
            continue
        edges = np.unique(np.concatenate([np.linspace(0, u.max(), cells + 1), u]))
        K = np.maximum(u[None, :] - edges[:, None], 0.0) @ ws
        flip = np.flatnonzero(K[:-1] * K[1:] < 0)
        roots = edges[flip] + K[flip] * (edges[flip + 1] - edges[flip]) / (K[flip] - K[flip + 1])
        edges = np.unique(np.concatenate([edges, roots]))
        a, b = edges[:-1], edges[1:]
        # integral over [a, b] of sum_i w_i (u_i - s)_+ ds
        ua = np.maximum(u[None, :] - a[:, None], 0.0)
        ub = np.maximum(u[None, :] - b[:, None], 0.0)
        coef = ((ua ** 2 - ub ** 2) / 2) @ ws
        objective.append(coef)
        bounds += [(-M, M)] * coef.size
    c = -np.concatenate(objective)
    norm = np.abs(c).max()
    tight = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
    res = linprog(c / norm, bounds=bounds, method="highs", options=tight)
    assert res.status == 0
    return float(-(c @ res.x))


def folded_normal_cv_mp(t, alpha=0.05, digits=30):
    """Arbitrary-precision bisection for P(|N(t,1)| > c) = alpha."""
    mpmath.mp.dps = digits
    t = mpmath.mpf(t)
    a = mpmath.mpf(alpha)

    def tail(c):
        return mpmath.ncdf(t - c) + mpmath.ncdf(-t - c)

    lo, hi = mpmath.mpf(0), t + 10
    for _ in range(200):
        mid = (lo + hi) / 2
        if tail(mid) > a:
            lo = mid
        else:
            hi = mid
    return float((lo + hi) / 2)


def constrained_lsq_enumeration(B, v, A_eq, b_eq, A_in, b_in, tol=1e-9):
    """Minimum of ||B beta - v||^2 over every choice of active inequalities.

    Each subset of inequalities is imposed as equalities together with
    A_eq; the feasible solution with the smallest SSR is returned. The
    optimum of a strictly convex problem is among these candidates.
    """
    B, v = np.asarray(B, float), np.asarray(v, float)
    n = B.shape[1]
    best = (np.inf, None)
    m = A_in.shape[0]
    for k in range(0, min(m, n) + 1):
        for S in itertools.combinations(range(m), k):
            A = np.vstack([A_eq, A_in[list(S)]]) if len(S) else A_eq
            b = np.concatenate([b_eq, b_in[list(S)]]) if len(S) else b_eq
            K = np.block([[2 * B.T @ B, A.T], [A, np.zeros((A.shape[0], A.shape[0]))]])
            rhs = np.concatenate([2 * B.T @ v, b])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            beta = sol[:n]
            if np.any(A_in @ beta - b_in > tol * (1 + np.abs(b_in).max())):
                continue
            if np.abs(A_eq @ beta - b_eq).max(initial=0) > tol:
                continue
            r = B @ beta - v
            ssr = float(r @ r)
            if ssr < best[0]:
                best = (ssr, beta)
    return best


def nn_variance_loop(x, u, v=None, J=3):
    """Per-observation nearest-neighbour (co)variance by direct search.

    Neighbours come from the same side of zero, ranked by distance, then
    by distance in stable sort order, then left before right.
    """
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    v = u if v is None else np.asarray(v, float)
    out = np.zeros(len(x))
    for side in (x < 0, x >= 0):
        idx = [int(i) for i in np.flatnonzero(side)]
        idx.sort(key=lambda i: (x[i], i))
        rank = {i: r for r, i in enumerate(idx)}
        k = min(J, len(idx) - 1)
        if k < 1:
            continue
        for i in idx:
            others = sorted(
                (j for j in idx if j != i),
                key=lambda j: (abs(x[j] - x[i]), abs(rank[j] - rank[i]), rank[j] - rank[i]),
            )[:k]
            ub = sum(u[j] for j in others) / k
            vb = sum(v[j] for j in others) / k
            out[i] = k / (k + 1) * (u[i] - ub) * (v[i] - vb)
    return out


def pilot_se(x, h, s2):
    """``sqrt(sum w_i^2 s2_i)`` with per-side intercept weights from the normal equations."""
    x = np.asarray(x, float)
    s2 = np.asarray(s2, float)
    total = 0.0
    for side in (x < 0, x >= 0):
        m = side & (np.abs(x) <= h)
        X = np.column_stack([np.ones(m.sum()), x[m]])
        w = np.linalg.solve(X.T @ X, X.T)[0]
        total += float(np.sum(w**2 * s2[m]))
    return float(np.sqrt(total))
