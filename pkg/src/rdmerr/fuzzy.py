"""Fuzzy RD: ratio estimator, delta-method SE and AR-style confidence sets.

The confidence set collects every ``tau0`` for which zero lies inside the
bias-aware interval for the jump in ``y - tau0 * t``. The conditional mean
of that outcome has curvature bounded by ``My + |tau0| * Mt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .biasaware import (
    BiasAwareCI,
    _as_M,
    _check_alpha,
    _interval,
    candidate_bandwidths,
    folded_normal_cv,
    worst_case_bias,
)
from .data import RdSample
from .errors import IdentificationError, InvalidParameter, WeakFirstStage
from .kernels import pilot_variance_sweep, window_sweep
from .localpoly import LinearEstimate, combine, ehw_joint_cov, fit, pilot_variance


@dataclass(frozen=True, eq=False)
class FuzzyEstimate:
    ratio: float
    se_delta: float
    fit_y: LinearEstimate
    fit_t: LinearEstimate
    cov: np.ndarray

    @property
    def h(self) -> float:
        return self.fit_y.h

    @property
    def n_eff(self) -> int:
        return self.fit_y.n_eff


def fuzzy_estimate(sample: RdSample, h: float, q: int = 1, dof_adjust: bool = False) -> FuzzyEstimate:
    """Ratio of reduced-form to first-stage jumps with a delta-method SE."""
    fit_y = fit(sample, "y", h, q, dof_adjust)
    fit_t = fit(sample, "t", h, q, dof_adjust)
    return _from_fits(fit_y, fit_t)


def _from_fits(fit_y, fit_t) -> FuzzyEstimate:
    ty, tt = fit_y.estimate, fit_t.estimate
    if tt == 0:
        raise WeakFirstStage("first-stage jump is exactly zero; ratio undefined")
    V = ehw_joint_cov(fit_y, fit_t)
    var = V[0, 0] / tt**2 - 2 * ty * V[0, 1] / tt**3 + ty**2 * V[1, 1] / tt**4
    return FuzzyEstimate(ty / tt, math.sqrt(max(var, 0.0)), fit_y, fit_t, V)


@dataclass(frozen=True)
class ArTestResult:
    tau0: float
    accepted: bool
    ci: BiasAwareCI


class _ArEngine:
    """Shared state for repeated AR tests on one sample.

    ``h_policy`` is either a positive bandwidth (held fixed across ``tau0``)
    or ``"reoptimize"`` (bandwidth re-chosen per ``tau0`` by CI length).
    """

    def __init__(self, sample, My, Mt, alpha, h_policy):
        _check_alpha(alpha)
        self.sample = sample
        self.My = _as_M(My)
        self.Mt = _as_M(Mt)
        self.alpha = alpha
        self.h_policy = h_policy
        self._fits = {}
        if h_policy == "reoptimize":
            hs = candidate_bandwidths(sample)
            self.hs = hs[hs > 0]
            ey, _, self.bias_unit, *_ = window_sweep(sample.x, sample.y, self.hs)
            et, *_ = window_sweep(sample.x, sample.t, self.hs)
            self.est_y, self.est_t = ey, et
            # pilot (co)variances, as in sharp bandwidth selection
            x, y, t = sample.x, sample.y, sample.t
            self.vyy = pilot_variance_sweep(x, pilot_variance(x, y), self.hs)
            self.vtt = pilot_variance_sweep(x, pilot_variance(x, t), self.hs)
            self.vyt = pilot_variance_sweep(x, pilot_variance(x, y, t), self.hs)
            self.feasible = np.isfinite(ey) & np.isfinite(self.vyy)
            # infeasible candidates are masked out; keep their entries finite
            for name in ("vyy", "vtt", "vyt"):
                setattr(self, name, np.where(self.feasible, getattr(self, name), 0.0))
            self._t_tab = np.linspace(0.0, 40.0, 8001)
            self._cv_tab = folded_normal_cv(self._t_tab, alpha)
            self._z1, self._z2 = ndtri(1 - alpha), ndtri(1 - alpha / 2)
            if not self.feasible.any():
                raise IdentificationError("no feasible bandwidth for the AR test")
        else:
            try:
                h = float(h_policy)
            except (TypeError, ValueError):
                raise InvalidParameter(f"h_policy must be a bandwidth or 'reoptimize', got {h_policy!r}") from None
            self._pair(h)

    def _pair(self, h):
        if h not in self._fits:
            self._fits[h] = (fit(self.sample, "y", h, 1), fit(self.sample, "t", h, 1))
        return self._fits[h]

    def _choose_h(self, tau0):
        M = self.My + abs(tau0) * self.Mt
        var = self.vyy - 2 * tau0 * self.vyt + tau0**2 * self.vtt
        se = np.sqrt(np.maximum(var, 0.0))
        bias = M * self.bias_unit
        obj = np.full(self.hs.shape, np.inf)
        f = self.feasible
        # cv is increasing in t: tabulated values bracket it, so only near-optimal candidates get an exact solve
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(se > 0, bias / se, np.inf)
            k = np.searchsorted(self._t_tab, t, side="right")
            inside = k < self._t_tab.size
            kk = np.minimum(k, self._t_tab.size - 1)
            cv_lo = np.where(inside, self._cv_tab[np.maximum(k - 1, 0)], t + self._z1)
            cv_hi = np.where(inside, self._cv_tab[kk], t + self._z2)
            lower = np.where(f & (se > 0), 2 * se * cv_lo, np.inf)
            upper = np.where(f & (se > 0), 2 * se * cv_hi, np.inf)
        cut = upper.min()
        pos = f & (se > 0) & (lower <= cut * (1 + 1e-8))
        obj[pos] = 2 * se[pos] * folded_normal_cv(bias[pos] / se[pos], self.alpha)
        zero = f & (se == 0)
        obj[zero] = 2 * bias[zero]
        best = obj[f].min()
        return float(self.hs[f & (obj <= best + 1e-9 * abs(best))].max())

    def _fixed_arrays(self, tau0):
        """Shifted estimate, SE, bias and half-length for many ``tau0`` at the fixed bandwidth."""
        fy, ft = self._pair(float(self.h_policy))
        if not hasattr(self, "_moments"):
            V = ehw_joint_cov(fy, ft)
            unit = worst_case_bias(fy, 1.0)
            self._moments = (V, unit)
        V, unit = self._moments
        tau0 = np.asarray(tau0, dtype=float)
        est = fy.estimate - tau0 * ft.estimate
        se = np.sqrt(np.maximum(V[0, 0] - 2 * tau0 * V[0, 1] + tau0**2 * V[1, 1], 0.0))
        M = self.My + np.abs(tau0) * self.Mt
        bias = M * unit
        with np.errstate(divide="ignore", invalid="ignore"):
            cv = np.where(se > 0, folded_normal_cv(np.where(se > 0, bias / se, 0.0), self.alpha), ndtri(1 - self.alpha / 2))
        half = np.where(se > 0, cv * se, bias)
        slack = 1e-12 * (abs(fy.estimate) + np.abs(tau0 * ft.estimate))
        return est, se, bias, cv, half, M, np.abs(est) <= half + slack

    def accepted_many(self, tau0) -> np.ndarray:
        if self.h_policy != "reoptimize":
            return self._fixed_arrays(tau0)[-1]
        return np.array([self.test(t).accepted for t in np.asarray(tau0, dtype=float)])

    def test(self, tau0) -> ArTestResult:
        if self.h_policy != "reoptimize":
            h = float(self.h_policy)
            est, se, bias, cv, half, M, acc = (float(a[0]) for a in self._fixed_arrays(np.array([tau0])))
            fy = self._pair(h)[0]
            ci = BiasAwareCI(est, se, bias, cv, est - half, est + half, h, M, self.alpha, fy.n_eff, se == 0)
            return ArTestResult(float(tau0), bool(acc), ci)
        h = self._choose_h(tau0)
        fy, ft = self._pair(h)
        shifted = combine(fy, ft, 1.0, -tau0)
        M = self.My + abs(tau0) * self.Mt
        bias = worst_case_bias(shifted, M)
        half, cv, degenerate = _interval(shifted.estimate, shifted.se_ehw, bias, self.alpha)
        est = shifted.estimate
        ci = BiasAwareCI(est, shifted.se_ehw, bias, cv, est - half, est + half, h, M, self.alpha, shifted.n_eff, degenerate)
        slack = 1e-12 * (abs(fy.estimate) + abs(tau0 * ft.estimate))
        return ArTestResult(float(tau0), bool(abs(est) <= half + slack), ci)


def ar_test(sample: RdSample, tau0: float, My, Mt, alpha: float = 0.05, h_policy="reoptimize") -> bool:
    """Accept ``H0: tau_F = tau0`` iff zero is in the bias-aware CI for ``y - tau0 t``."""
    return _ArEngine(sample, My, Mt, alpha, h_policy).test(tau0).accepted


@dataclass(frozen=True)
class ArConfidenceSet:
    """Union of closed intervals; infinite endpoints mark unbounded pieces."""

    intervals: list
    unbounded_flag: str
    grid_resolution: float
    alpha: float
    h_policy: str
    center: float
    grid: np.ndarray = field(repr=False, default=None)
    accepted: np.ndarray = field(repr=False, default=None)

    @property
    def hull(self) -> tuple[float, float]:
        if not self.intervals:
            return (math.nan, math.nan)
        return (self.intervals[0][0], self.intervals[-1][1])

    @property
    def empty(self) -> bool:
        return not self.intervals

    def __contains__(self, value) -> bool:
        return any(lo <= value <= hi for lo, hi in self.intervals)

    def describe(self, digits: int = 3) -> str:
        if not self.intervals:
            return "empty"
        parts = []
        for lo, hi in self.intervals:
            a = "-inf" if lo == -math.inf else f"{lo:.{digits}f}"
            b = "inf" if hi == math.inf else f"{hi:.{digits}f}"
            parts.append(f"[{a},{b}]")
        return " U ".join(parts)


def default_grid(sample: RdSample, h: float):
    """Center, step and half-width tied to the plug-in ratio's precision."""
    try:
        fe = fuzzy_estimate(sample, h)
    except WeakFirstStage:
        return 0.0, 1e-3, 0.5
    if fe.se_delta > 0:
        step = fe.se_delta / 10
    else:
        step = (abs(fe.ratio) + 1) / 1000
    return fe.ratio, step, 500 * step


def ar_confidence_set(
    sample: RdSample,
    My,
    Mt,
    alpha: float = 0.05,
    h_policy="reoptimize",
    center: float | None = None,
    step: float | None = None,
    max_half_width: float | None = None,
    pilot_h: float | None = None,
) -> ArConfidenceSet:
    """Invert the AR test over an equally spaced grid of ``tau0`` values.

    Accepted runs become intervals padded by half a step on each side. If
    the outermost grid point on a side is accepted, that side is reported
    as unbounded. Grid defaults come from the plug-in ratio at ``pilot_h``
    (the fixed bandwidth, or the largest candidate under reoptimization):
    step ``se/10`` and 500 steps on each side.
    """
    engine = _ArEngine(sample, My, Mt, alpha, h_policy)
    if center is None or step is None or max_half_width is None:
        if pilot_h is None:
            pilot_h = float(h_policy) if h_policy != "reoptimize" else float(engine.hs[engine.feasible].max())
        c0, s0, w0 = default_grid(sample, pilot_h)
        center = c0 if center is None else center
        step = s0 if step is None else step
        max_half_width = w0 if max_half_width is None else max_half_width
    if not step > 0 or not max_half_width > 0:
        raise InvalidParameter("grid step and half-width must be positive")
    k = int(math.ceil(max_half_width / step - 1e-9))
    grid = center + step * np.arange(-k, k + 1)
    accepted = engine.accepted_many(grid)

    intervals = []
    i = 0
    while i < grid.size:
        if not accepted[i]:
            i += 1
            continue
        j = i
        while j + 1 < grid.size and accepted[j + 1]:
            j += 1
        lo = -math.inf if i == 0 else grid[i] - step / 2
        hi = math.inf if j == grid.size - 1 else grid[j] + step / 2
        intervals.append((float(lo), float(hi)))
        i = j + 1
    left, right = bool(accepted[0]), bool(accepted[-1])
    flag = {(False, False): "none", (True, False): "left", (False, True): "right", (True, True): "both"}[(left, right)]
    policy = "reoptimize" if h_policy == "reoptimize" else f"fixed(h={float(h_policy):g})"
    return ArConfidenceSet(intervals, flag, step, alpha, policy, float(center), grid, accepted)
