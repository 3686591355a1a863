"""Calibration and visualization of the curvature bound ``M``.

Two rules of thumb are provided: a global quartic fit per side (largest
absolute second derivative over each side's observed range), and a global
quadratic fit per side whose curvature is inflated by a moderate factor.
``extremal_spline_fit`` fits a quadratic spline with curvature capped at
``M`` and pinned to ``+/-M`` next to the cutoff, which shows what an
extremal member of the smoothness class looks like against the data.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .biasaware import SmoothnessClass, _as_M
from .data import RdSample, ScaleInfo
from .errors import IdentificationError, InvalidParameter, SolverError
from .qp import constrained_lsq


def _sides(sample: RdSample, outcome):
    v = sample.outcome(outcome)
    left, right = sample.x < 0, sample.x >= 0
    return (("left", sample.x[left], v[left]), ("right", sample.x[right], v[right]))


def _require_support(side, x, need):
    k = np.unique(x).size
    if k < need:
        raise IdentificationError(
            f"{side} side has {k} distinct x values; need at least {need}",
            side=side,
            count=k,
            required=need,
        )


def _max_abs_on(p: Polynomial, lo: float, hi: float) -> float:
    pts = [lo, hi]
    if p.degree() >= 1:
        pts += [r.real for r in p.deriv().roots() if abs(r.imag) < 1e-12 and lo <= r.real <= hi]
    return float(np.max(np.abs(p(np.array(pts)))))


def rot_ak(sample: RdSample, outcome="y") -> SmoothnessClass:
    """Global quartic per side; largest ``|g''|`` over the observed range."""
    best = 0.0
    for side, x, v in _sides(sample, outcome):
        _require_support(side, x, 5)
        p = Polynomial.fit(x, v, 4)
        best = max(best, _max_abs_on(p.deriv(2), x.min(), x.max()))
    return SmoothnessClass(best)


def rot_iw(sample: RdSample, outcome="y", factor: float = 2.0) -> SmoothnessClass:
    """Global quadratic per side; ``factor`` times the largest ``|g''|``."""
    if not factor > 0:
        raise InvalidParameter("inflation factor must be positive")
    best = 0.0
    for side, x, v in _sides(sample, outcome):
        _require_support(side, x, 3)
        c2 = Polynomial.fit(x, v, 2).convert().coef
        c2 = c2[2] if c2.size > 2 else 0.0
        best = max(best, abs(2.0 * c2))
    return SmoothnessClass(factor * best)


def rescaled_constant(M, scale: ScaleInfo) -> float:
    """Curvature bound after mapping the running variable onto ``[-1, 1]``."""
    return _as_M(M) * scale.scale


def spline_basis(u, knots) -> np.ndarray:
    """Truncated power basis ``1, u, u^2, (u - k_j)_+^2`` on ``u >= 0``."""
    u = np.asarray(u, dtype=float)
    cols = [np.ones_like(u), u, u * u]
    cols += [np.maximum(u - k, 0.0) ** 2 for k in knots]
    return np.column_stack(cols)


def curvature_matrix(n_knots: int) -> np.ndarray:
    """Rows map coefficients to ``g''`` on each of the ``n_knots + 1`` pieces."""
    D = np.zeros((n_knots + 1, n_knots + 3))
    D[:, 2] = 2.0
    for j in range(n_knots):
        D[j + 1:, 3 + j] = 2.0
    return D


def place_knots(u, n_knots: int, placement: str = "equal") -> np.ndarray:
    lo, hi = float(np.min(u)), float(np.max(u))
    if placement == "equal":
        return np.linspace(lo, hi, n_knots + 2)[1:-1]
    if placement == "quantile":
        return np.quantile(u, np.linspace(0, 1, n_knots + 2)[1:-1])
    raise InvalidParameter(f"knot placement must be 'equal' or 'quantile', got {placement!r}")


@dataclass
class SideFit:
    side: str
    knots: np.ndarray
    coef: np.ndarray
    ssr: float
    sign: int | None
    active: list
    kkt_residual: float
    max_violation: float
    iterations: int

    def _u(self, x):
        x = np.asarray(x, dtype=float)
        return -x if self.side == "left" else x

    def __call__(self, x):
        return spline_basis(self._u(x), self.knots) @ self.coef

    def curvatures(self) -> np.ndarray:
        return curvature_matrix(self.knots.size) @ self.coef

    def second_derivative(self, x):
        u = self._u(x)
        piece = np.searchsorted(self.knots, u, side="right")
        return self.curvatures()[piece]


@dataclass
class SplineFit:
    left: SideFit
    right: SideFit
    M: float
    sign: str
    unconstrained_ssr: float = field(default=np.nan)

    @property
    def ssr(self) -> float:
        return self.left.ssr + self.right.ssr

    @property
    def knots_left(self) -> np.ndarray:
        return -self.left.knots

    @property
    def knots_right(self) -> np.ndarray:
        return self.right.knots

    @property
    def kkt_residual(self) -> float:
        return max(self.left.kkt_residual, self.right.kkt_residual)

    @property
    def active_constraints(self) -> list:
        return [(s.side,) + a for s in (self.left, self.right) for a in s.active]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, self.left(x), self.right(x))

    def second_derivative(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, self.left.second_derivative(x), self.right.second_derivative(x))

    def grid(self, lo: float, hi: float, points_per_side: int = 200):
        xl = np.linspace(lo, 0.0, points_per_side, endpoint=False)
        xr = np.linspace(0.0, hi, points_per_side)
        x = np.concatenate([xl, xr])
        return x, self(x), self.second_derivative(x)

    def to_csv(self, path, lo: float, hi: float, points_per_side: int = 200, offset: float = 0.0) -> None:
        """Write the fit on a grid; ``offset`` shifts ``x`` back to original units."""
        x, g, g2 = self.grid(lo, hi, points_per_side)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "fitted", "second_derivative", "side"])
            for xi, gi, ci in zip(x, g, g2):
                w.writerow([f"{xi + offset:.10g}", f"{gi:.10g}", f"{ci:.10g}", "left" if xi < 0 else "right"])


def _fit_side(side, u, v, knots, M, sign, pinned):
    B = spline_basis(u, knots)
    if np.linalg.matrix_rank(B) < B.shape[1]:
        raise IdentificationError(
            f"{side} side: {np.unique(u).size} distinct points cannot identify "
            f"{B.shape[1]} spline coefficients",
            side=side,
        )
    D = curvature_matrix(knots.size)
    A_in = np.vstack([D, -D])
    b_in = np.full(2 * D.shape[0], M)
    x0 = np.zeros(B.shape[1])
    if pinned:
        A_eq, b_eq = D[:1], np.array([sign * M])
        x0[2] = sign * M / 2
    else:
        A_eq, b_eq = None, None
    res = constrained_lsq(B, v, A_eq, b_eq, A_in, b_in, x0=x0)
    npieces = D.shape[0]
    active = [(i % npieces, "upper" if i < npieces else "lower") for i in res.active]
    if pinned:
        active.insert(0, (0, "pinned"))
    return SideFit(side, knots, res.beta, res.ssr, sign if pinned else None, active,
                   res.kkt_residual, res.max_violation, res.iterations)


def extremal_spline_fit(
    sample: RdSample,
    outcome="y",
    M=0.0,
    knots_per_side: int = 21,
    sign: str = "best",
    pin=("left", "right"),
    placement: str = "equal",
) -> SplineFit:
    """Least-squares quadratic spline with ``|g''| <= M`` on every piece.

    Each side is fit separately on the distance ``|x|`` from the cutoff.
    On each side listed in ``pin`` the piece touching the cutoff is forced
    to ``g'' = +M`` (``sign="+"``) or ``-M`` (``sign="-"``); ``"best"``
    solves both and keeps the lower-SSR one, independently per side since
    the two sides share no coefficients.
    """
    Mv = _as_M(M)
    if knots_per_side < 1:
        raise InvalidParameter("knots_per_side must be at least 1")
    if sign not in ("+", "-", "best"):
        raise InvalidParameter(f"sign must be '+', '-' or 'best', got {sign!r}")
    signs = {"+": (1,), "-": (-1,), "best": (1, -1)}[sign]
    fits = {}
    unconstrained = 0.0
    for side, x, v in _sides(sample, outcome):
        u = -x if side == "left" else x
        knots = place_knots(u, knots_per_side, placement)
        pinned = side in pin
        candidates = [_fit_side(side, u, v, knots, Mv, s, pinned) for s in (signs if pinned else (1,))]
        fits[side] = min(candidates, key=lambda f: f.ssr)
        B = spline_basis(u, knots)
        r = B @ np.linalg.lstsq(B, v, rcond=None)[0] - v
        unconstrained += float(r @ r)
    for f in fits.values():
        if f.max_violation > 1e-8 * (1 + Mv):
            raise SolverError(f"{f.side} side violates constraints by {f.max_violation:.3g}")
    return SplineFit(fits["left"], fits["right"], Mv, sign, unconstrained)
