"""Bias-aware (honest) confidence intervals for local linear RD estimates.

The smoothness class bounds the second derivative of the conditional mean
by ``M`` on either side of the cutoff. For a local linear estimator the
conditional bias over that class is maximized by
``h(x) = M x^2 (1{x<0} - 1{x>=0}) / 2``, so the worst-case bias is the
estimator applied to ``h``. Intervals take the form
``estimate +/- cv_alpha(B / se) * se`` with ``cv_alpha(t)`` the
``1 - alpha`` quantile of ``|N(t, 1)|``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .data import RdSample
from .errors import (
    DegenerateVarianceWarning,
    IdentificationError,
    InvalidParameter,
    UnsupportedConfiguration,
)
from .kernels import pilot_variance_sweep, window_sweep
from .localpoly import LinearEstimate, pilot_variance

CRITERIA = ("worst_case_mse", "ci_length")


@dataclass(frozen=True)
class SmoothnessClass:
    """Bound ``M`` on the absolute second derivative on each side of zero."""

    M: float

    def __post_init__(self):
        if not (math.isfinite(self.M) and self.M >= 0):
            raise InvalidParameter(f"smoothness bound must be finite and >= 0, got {self.M}")

    def __float__(self):
        return float(self.M)


def _as_M(M) -> float:
    return float(M.M if isinstance(M, SmoothnessClass) else SmoothnessClass(float(M)).M)


@dataclass(frozen=True)
class BiasAwareCI:
    estimate: float
    se: float
    bias_bound: float
    cv: float
    lower: float
    upper: float
    h: float
    M: float
    alpha: float = 0.05
    n_eff: int = 0
    degenerate: bool = False

    @property
    def half_length(self) -> float:
        return 0.5 * (self.upper - self.lower)

    def __contains__(self, value) -> bool:
        return self.lower <= value <= self.upper


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise InvalidParameter(f"alpha must lie in (0, 1), got {alpha}")


def folded_tail(c, t):
    """``P(|N(t, 1)| > c)``, computed from the two upper tails."""
    return ndtr(t - c) + ndtr(-t - c)


def folded_normal_cv(t, alpha: float = 0.05, tol: float = 1e-12):
    """Quantile ``1 - alpha`` of the folded normal ``|N(t, 1)|``.

    Solves ``Phi(c - t) - Phi(-c - t) = 1 - alpha`` by Newton steps
    safeguarded with bisection on the bracket
    ``[t + z_{1-alpha}, t + z_{1-alpha/2}]``, which always contains the
    root. Accepts scalars or arrays; negative ``t`` is folded to ``|t|``.
    """
    _check_alpha(alpha)
    t_arr = np.abs(np.asarray(t, dtype=float))
    lo = t_arr + ndtri(1 - alpha)
    hi = t_arr + ndtri(1 - alpha / 2)
    c = hi.copy()
    for _ in range(100):
        f = folded_tail(c, t_arr) - alpha
        # tail is decreasing in c
        lo = np.where(f > 0, c, lo)
        hi = np.where(f <= 0, c, hi)
        slope = -(np.exp(-0.5 * (c - t_arr) ** 2) + np.exp(-0.5 * (c + t_arr) ** 2)) / math.sqrt(2 * math.pi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(slope != 0, f / slope, np.inf)
        newton = c - step
        inside = (newton > lo) & (newton < hi)
        c_new = np.where(inside, newton, 0.5 * (lo + hi))
        done = np.abs(c_new - c) <= tol * np.maximum(1.0, c)
        c = c_new
        if np.all(done | (hi - lo <= tol)):
            break
    return float(c) if np.ndim(c) == 0 else c


def bias_kernel(x) -> np.ndarray:
    """Worst-case function for ``M = 1``: ``x^2 (1{x<0} - 1{x>=0}) / 2``."""
    x = np.asarray(x, dtype=float)
    return 0.5 * x * x * np.where(x < 0, 1.0, -1.0)


def worst_case_bias(est: LinearEstimate, M) -> float:
    """Supremum of the conditional bias of a local linear fit over the class.

    Computed as ``|sum_i w_i h(x_i)|`` with the worst-case function ``h``.
    """
    M = _as_M(M)
    if est.q != 1:
        raise UnsupportedConfiguration(
            f"worst-case bias formula covers local linear fits only (q=1), got q={est.q}"
        )
    return abs(float(est.weights @ bias_kernel(est.x))) * M


def _interval(estimate, se, bias, alpha):
    """Half-length and critical value; se = 0 degenerates to +/- bias."""
    if se > 0:
        cv = folded_normal_cv(bias / se, alpha)
        return cv * se, cv, False
    return bias, float(ndtri(1 - alpha / 2)), True


def bias_aware_ci(est: LinearEstimate, M, alpha: float = 0.05) -> BiasAwareCI:
    """Bias-aware interval around a local linear estimate.

    With a zero standard error the folded-normal ratio is undefined; the
    interval is then ``estimate +/- B``, ``degenerate`` is set, and a
    :class:`DegenerateVarianceWarning` is issued when ``B > 0``.
    """
    _check_alpha(alpha)
    Mv = _as_M(M)
    bias = worst_case_bias(est, Mv)
    half, cv, degenerate = _interval(est.estimate, est.se_ehw, bias, alpha)
    if degenerate and bias > 0:
        warnings.warn(
            "standard error is zero; reporting estimate +/- worst-case bias",
            DegenerateVarianceWarning,
            stacklevel=2,
        )
    return BiasAwareCI(
        estimate=est.estimate,
        se=est.se_ehw,
        bias_bound=bias,
        cv=cv,
        lower=est.estimate - half,
        upper=est.estimate + half,
        h=est.h,
        M=Mv,
        alpha=alpha,
        n_eff=est.n_eff,
        degenerate=degenerate,
    )


def naive_ci(est: LinearEstimate, alpha: float = 0.05) -> BiasAwareCI:
    """Conventional Wald interval that ignores smoothing bias."""
    _check_alpha(alpha)
    z = float(ndtri(1 - alpha / 2))
    return BiasAwareCI(
        estimate=est.estimate,
        se=est.se_ehw,
        bias_bound=0.0,
        cv=z,
        lower=est.estimate - z * est.se_ehw,
        upper=est.estimate + z * est.se_ehw,
        h=est.h,
        M=0.0,
        alpha=alpha,
        n_eff=est.n_eff,
        degenerate=est.se_ehw == 0,
    )


def candidate_bandwidths(sample: RdSample) -> np.ndarray:
    """Distinct ``|x|`` values: the window only changes at these points."""
    return np.unique(np.abs(sample.x))


@dataclass(frozen=True)
class BandwidthTable:
    """Objective evaluated on every candidate bandwidth."""

    h: np.ndarray
    estimate: np.ndarray
    se: np.ndarray
    bias: np.ndarray
    objective: np.ndarray
    feasible: np.ndarray
    se_pilot: np.ndarray


def bandwidth_table(
    sample: RdSample,
    M,
    alpha: float = 0.05,
    criterion: str = "worst_case_mse",
    outcome="y",
    candidates=None,
) -> BandwidthTable:
    if criterion not in CRITERIA:
        raise InvalidParameter(f"criterion must be one of {CRITERIA}, got {criterion!r}")
    _check_alpha(alpha)
    Mv = _as_M(M)
    hs = candidate_bandwidths(sample) if candidates is None else np.sort(np.asarray(candidates, dtype=float))
    hs = hs[hs > 0]
    v = sample.outcome(outcome)
    estimate, se, bias_unit, *_ = window_sweep(sample.x, v, hs)
    bias = Mv * bias_unit
    feasible = np.isfinite(estimate)
    # selection uses a pilot variance: EHW residuals vanish in tiny windows
    se_ehw = se
    with np.errstate(invalid="ignore"):
        se = np.sqrt(np.maximum(pilot_variance_sweep(sample.x, pilot_variance(sample.x, v), hs), 0.0))
    obj = np.full(hs.shape, np.inf)
    f = feasible & np.isfinite(se)
    if criterion == "worst_case_mse":
        obj[f] = bias[f] ** 2 + se[f] ** 2
    else:
        pos = f & (se > 0)
        obj[pos] = 2.0 * se[pos] * folded_normal_cv(bias[pos] / se[pos], alpha)
        zero = f & (se == 0)
        obj[zero] = 2.0 * bias[zero]
    return BandwidthTable(hs, estimate, se_ehw, bias, obj, f, se)


def select_from_table(table: BandwidthTable, rtol: float = 1e-9) -> float:
    """Minimizer of the objective; near-ties go to the larger bandwidth."""
    if not table.feasible.any():
        raise IdentificationError("no candidate bandwidth has two support points on each side")
    best = np.min(table.objective[table.feasible])
    ties = table.feasible & (table.objective <= best + rtol * abs(best))
    return float(table.h[ties].max())


def optimize_bandwidth(
    sample: RdSample,
    M,
    alpha: float = 0.05,
    criterion: str = "worst_case_mse",
    outcome="y",
    candidates=None,
) -> float:
    """Bandwidth minimizing worst-case MSE or bias-aware CI length.

    The objective is ``B(h)^2 + se(h)^2`` for ``worst_case_mse`` and
    ``2 cv_alpha(B(h)/se(h)) se(h)`` for ``ci_length``. Here ``se(h)`` is
    ``sqrt(sum_i w_i(h)^2 s_i^2)`` with ``s_i^2`` the per-side mean of
    nearest-neighbour variance estimates (three same-side neighbours), so
    windows with few observations are not rewarded for small residuals. Reported standard
    errors remain EHW at the chosen bandwidth. Candidates default to the
    distinct values of ``|x|``.
    """
    table = bandwidth_table(sample, M, alpha, criterion, outcome, candidates)
    return select_from_table(table)
