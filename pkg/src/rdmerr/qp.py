"""Dense primal active-set solver for constrained least squares.

Solves::

    minimize    ||B beta - v||^2
    subject to  A_eq beta  = b_eq
                A_in beta <= b_in

starting from a feasible point. Each equality-constrained subproblem is
solved in the null space of the working constraints with an orthogonal
least-squares solve, so no normal equations are formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from .errors import SolverError


@dataclass
class QPResult:
    beta: np.ndarray
    active: list
    eq_multipliers: np.ndarray
    in_multipliers: np.ndarray
    iterations: int
    kkt_residual: float
    max_violation: float
    ssr: float


def _empty(n):
    return np.zeros((0, n))


def constrained_lsq(B, v, A_eq=None, b_eq=None, A_in=None, b_in=None, x0=None, tol=1e-10, max_iter=None) -> QPResult:
    B = np.asarray(B, dtype=float)
    v = np.asarray(v, dtype=float)
    n = B.shape[1]
    A_eq = _empty(n) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    A_in = _empty(n) if A_in is None else np.atleast_2d(np.asarray(A_in, dtype=float))
    b_in = np.zeros(0) if b_in is None else np.asarray(b_in, dtype=float)
    if x0 is None:
        raise SolverError("a feasible starting point is required")
    x = np.asarray(x0, dtype=float).copy()
    scale = 1.0 + np.abs(A_in).sum(axis=1).max(initial=0.0) * (1.0 + np.abs(x).max(initial=0.0))
    if np.any(np.abs(A_eq @ x - b_eq) > 1e-9 * scale) or np.any(A_in @ x - b_in > 1e-9 * scale):
        raise SolverError("starting point is infeasible")
    max_iter = max_iter or 50 * (A_in.shape[0] + n + 1)
    grad_scale = 1.0 + 2.0 * np.abs(B.T @ v).max(initial=0.0)

    W: list[int] = []
    for it in range(1, max_iter + 1):
        A_W = np.vstack([A_eq, A_in[W]])
        N = null_space(A_W) if A_W.shape[0] else np.eye(n)
        if N.shape[1]:
            z, *_ = np.linalg.lstsq(B @ N, v - B @ x, rcond=None)
            p = N @ z
        else:
            p = np.zeros(n)
        if np.linalg.norm(p, np.inf) <= tol * (1.0 + np.linalg.norm(x, np.inf)):
            g = 2.0 * B.T @ (B @ x - v)
            if A_W.shape[0]:
                lam, *_ = np.linalg.lstsq(A_W.T, -g, rcond=None)
            else:
                lam = np.zeros(0)
            mu = lam[A_eq.shape[0]:]
            if mu.size == 0 or mu.min() >= -tol * grad_scale:
                return _finish(B, v, A_eq, b_eq, A_in, b_in, x, W, lam, it, grad_scale)
            W.pop(int(np.argmin(mu)))
            continue
        # ratio test over constraints outside the working set
        Ap = A_in @ p
        slack = b_in - A_in @ x
        step, block = 1.0, None
        for i in range(A_in.shape[0]):
            if i in W or Ap[i] <= 1e-14 * np.abs(A_in[i]).sum() * np.linalg.norm(p, np.inf):
                continue
            r = max(slack[i], 0.0) / Ap[i]
            if r < step:
                step, block = r, i
        x = x + step * p
        if block is not None:
            W.append(block)
    raise SolverError(f"active-set iterations exceeded {max_iter}", iterations=max_iter)


def _finish(B, v, A_eq, b_eq, A_in, b_in, x, W, lam, it, grad_scale):
    g = 2.0 * B.T @ (B @ x - v)
    n_eq = A_eq.shape[0]
    nu = lam[:n_eq]
    mu = np.zeros(A_in.shape[0])
    mu[W] = np.maximum(lam[n_eq:], 0.0)
    r = g + A_eq.T @ nu + A_in.T @ mu
    kkt = float(np.abs(r).max(initial=0.0) / grad_scale)
    viol = max(
        float(np.abs(A_eq @ x - b_eq).max(initial=0.0)),
        float(np.maximum(A_in @ x - b_in, 0.0).max(initial=0.0)),
    )
    resid = B @ x - v
    return QPResult(x, sorted(W), nu, mu, it, kkt, viol, float(resid @ resid))
