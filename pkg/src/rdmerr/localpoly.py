"""Local polynomial RD estimation with a uniform kernel.

The estimator is the coefficient on ``1{x >= 0}`` in a least-squares
regression of the outcome on a fully interacted polynomial in ``x``, using
observations with ``|x| <= h``. Because the estimator is linear in the
outcome, every fit also carries its weight vector, so that
``estimate == weights @ outcome[window]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import RdSample, support_count
from .errors import IdentificationError, InvalidPairing, InvalidParameter

MAX_ORDER = 4


def basis(x, q: int = 1) -> np.ndarray:
    """Interacted polynomial basis.

    Ordering is ``(1{x>=0}, 1{x>=0} x, ..., 1{x>=0} x^q, 1, x, ..., x^q)``.
    A scalar ``x`` gives a vector of length ``2(q+1)``; an array gives one
    row per element.
    """
    if q < 0:
        raise InvalidParameter("polynomial order must be non-negative")
    xa = np.asarray(x, dtype=float)
    powers = xa[..., None] ** np.arange(q + 1)
    treated = (xa >= 0)[..., None] * powers
    return np.concatenate([treated, powers], axis=-1)


@dataclass(frozen=True, eq=False)
class LinearEstimate:
    """Result of a local polynomial fit.

    ``weights`` and ``residuals`` are aligned with ``window``, the indices
    of the in-window rows of the originating sample.
    """

    estimate: float
    weights: np.ndarray
    residuals: np.ndarray
    se_ehw: float
    n_eff: int
    h: float
    q: int
    window: np.ndarray
    x: np.ndarray
    coef: np.ndarray
    dof_adjust: bool = False

    @property
    def variance_factor(self) -> float:
        k = 2 * (self.q + 1)
        if self.dof_adjust and self.n_eff > k:
            return self.n_eff / (self.n_eff - k)
        return 1.0


def window_mask(x, h: float) -> np.ndarray:
    return np.abs(x) <= h


def check_support(sample: RdSample, h: float, q: int) -> None:
    for side in ("left", "right"):
        count = support_count(sample, side, h)
        if count < q + 1:
            raise IdentificationError(
                f"{side} side has {count} support point(s) within h={h:g}; "
                f"order {q} needs at least {q + 1}",
                side=side,
                count=count,
                required=q + 1,
            )


RESID_FLOOR = 1e-12


def fit(sample: RdSample, outcome="y", h: float = np.inf, q: int = 1, dof_adjust: bool = False) -> LinearEstimate:
    """Local polynomial estimate of the jump at zero.

    Parameters
    ----------
    sample : RdSample
    outcome : {"y", "t"} or array_like
        Outcome selector; an array is used as-is (e.g. ``y - tau0 * t``).
    h : float
        Bandwidth. The window ``|x| <= h`` is closed on both ends.
    q : int
        Polynomial order, at most 4.
    dof_adjust : bool
        Scale the EHW variance by ``n / (n - k)``.

    Raises
    ------
    IdentificationError
        Fewer than ``q + 1`` distinct ``x`` values on a side of the window,
        or a rank-deficient design.
    """
    if not h > 0:
        raise InvalidParameter("bandwidth must be positive")
    if not 0 <= q <= MAX_ORDER:
        raise InvalidParameter(f"polynomial order must be in [0, {MAX_ORDER}]")
    v = sample.outcome(outcome)
    check_support(sample, h, q)

    window = np.flatnonzero(window_mask(sample.x, h))
    xw = sample.x[window]
    vw = v[window]
    # column scaling leaves the 1{x>=0} coefficient unchanged
    scale = float(np.max(np.abs(xw))) or 1.0
    X = basis(xw / scale, q)
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-12 * diag.max():
        raise IdentificationError("design matrix is rank deficient inside the window")
    e1 = np.zeros(X.shape[1])
    e1[0] = 1.0
    weights = Q @ np.linalg.solve(R.T, e1)
    coef_scaled = np.linalg.solve(R, Q.T @ vw)
    residuals = vw - X @ coef_scaled
    # an exact fit leaves only round-off; report zero variance in that case
    if np.max(np.abs(residuals)) <= RESID_FLOOR * (1.0 + np.max(np.abs(vw))):
        residuals = np.zeros_like(residuals)
    estimate = float(weights @ vw)
    powers = np.tile(scale ** -np.arange(q + 1), 2)
    result = LinearEstimate(
        estimate=estimate,
        weights=weights,
        residuals=residuals,
        se_ehw=0.0,
        n_eff=int(window.size),
        h=float(h),
        q=q,
        window=window,
        x=xw,
        coef=coef_scaled * powers,
        dof_adjust=dof_adjust,
    )
    var = result.variance_factor * float(np.sum(weights ** 2 * residuals ** 2))
    object.__setattr__(result, "se_ehw", float(np.sqrt(var)))
    return result


def nn_variance(x, u, v=None, J: int = 3) -> np.ndarray:
    """Nearest-neighbour estimates of ``Cov(u_i, v_i | x_i)`` per observation.

    Each observation is compared with the mean of its ``J`` nearest
    neighbours on the same side of the cutoff:
    ``J / (J + 1) (u_i - ubar_i)(v_i - vbar_i)``. Distance ties go to the
    neighbour nearer in sort order, then to the left one. With ``v=None``
    this is the variance of ``u``. Sides with fewer than ``J + 1``
    observations use every other observation on that side.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    v = u if v is None else np.asarray(v, dtype=float)
    if J < 1:
        raise InvalidParameter("J must be at least 1")
    out = np.zeros(x.size)
    for mask in (x < 0, x >= 0):
        idx = np.flatnonzero(mask)
        m = idx.size
        if m < 2:
            continue
        order = idx[np.argsort(x[idx], kind="stable")]
        xs, us, vs = x[order], u[order], v[order]
        k = min(J, m - 1)
        offsets = np.concatenate([np.arange(-k, 0), np.arange(1, k + 1)])
        pos = np.arange(m)[:, None] + offsets[None, :]
        valid = (pos >= 0) & (pos < m)
        posc = np.clip(pos, 0, m - 1)
        dist = np.where(valid, np.abs(xs[posc] - xs[:, None]), np.inf)
        # distance ties go to the nearer rank, then to the left
        off = np.broadcast_to(offsets, dist.shape)
        rank = np.lexsort((off, np.abs(off), dist), axis=-1)
        pick = np.take_along_axis(posc, rank[:, :k], axis=1)
        ubar, vbar = us[pick].mean(axis=1), vs[pick].mean(axis=1)
        out[order] = k / (k + 1) * (us - ubar) * (vs - vbar)
    return out


def pilot_variance(x, u, v=None, J: int = 3) -> np.ndarray:
    """Per-side average of :func:`nn_variance`, broadcast to each observation.

    Used only to score candidate bandwidths: a constant per side keeps a
    few lucky near-zero neighbour estimates from favouring tiny windows.
    """
    x = np.asarray(x, dtype=float)
    s2 = nn_variance(x, u, v, J)
    out = np.empty_like(s2)
    for mask in (x < 0, x >= 0):
        if mask.any():
            out[mask] = s2[mask].mean()
    return out


def ehw_joint_cov(fit_y: LinearEstimate, fit_t: LinearEstimate) -> np.ndarray:
    """Sandwich covariance of two jump estimates computed on one window."""
    if (
        fit_y.q != fit_t.q
        or fit_y.window.shape != fit_t.window.shape
        or not np.array_equal(fit_y.window, fit_t.window)
    ):
        raise InvalidPairing("fits were computed on different estimation windows")
    w2 = fit_y.weights ** 2
    ey, et = fit_y.residuals, fit_t.residuals
    c = fit_y.variance_factor
    vyy = c * float(np.sum(w2 * ey * ey))
    vyt = c * float(np.sum(w2 * ey * et))
    vtt = c * float(np.sum(w2 * et * et))
    return np.array([[vyy, vyt], [vyt, vtt]])


def combine(fit_a: LinearEstimate, fit_b: LinearEstimate, alpha: float, beta: float) -> LinearEstimate:
    """Fit of ``alpha * a + beta * b`` built from two fits on one window.

    Exact by linearity; avoids refitting when scanning over ``tau0``.
    """
    if not np.array_equal(fit_a.window, fit_b.window):
        raise InvalidPairing("fits were computed on different estimation windows")
    residuals = alpha * fit_a.residuals + beta * fit_b.residuals
    var = fit_a.variance_factor * float(np.sum(fit_a.weights ** 2 * residuals ** 2))
    return LinearEstimate(
        estimate=alpha * fit_a.estimate + beta * fit_b.estimate,
        weights=fit_a.weights,
        residuals=residuals,
        se_ehw=float(np.sqrt(var)),
        n_eff=fit_a.n_eff,
        h=fit_a.h,
        q=fit_a.q,
        window=fit_a.window,
        x=fit_a.x,
        coef=alpha * fit_a.coef + beta * fit_b.coef,
        dof_adjust=fit_a.dof_adjust,
    )
