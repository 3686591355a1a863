"""Synthetic RD designs with a mismeasured running variable.

A :class:`Dgp` draws the latent running variable ``x_star``, assigns
``z = 1{x_star >= 0}``, draws treatment (sharp, or one-sided compliance
with ``T(0) = 0`` and ``T(1) ~ Bernoulli(P(C | x_star))``), and forms
``y = g_T(x_star) + noise``. The observed running variable is produced by
the error model. Exact estimands average the latent effect over the
distribution of the error given ``x = 0``.

Every replication of a coverage experiment draws from its own Philox
stream keyed by ``(seed, replication)``, so serial and parallel runs give
bit-identical output.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import ndtr, ndtri

from .biasaware import bias_aware_ci, naive_ci, optimize_bandwidth
from .data import RdSample, doughnut_trim, round_down
from .errors import ConfigError, InvalidParameter, NumericError, RdError, UndefinedEstimand
from .fuzzy import ar_confidence_set, fuzzy_estimate
from .localpoly import fit

# ---------------------------------------------------------------- functions


class Poly:
    """Polynomial with ascending coefficients."""

    def __init__(self, coeffs: Sequence[float]):
        self.coeffs = tuple(float(c) for c in coeffs) or (0.0,)
        self.kinks = ()

    def __call__(self, u):
        return np.polynomial.polynomial.polyval(u, self.coeffs)

    def __repr__(self):
        return f"Poly({list(self.coeffs)})"


class Abs:
    """``scale * |u - at|``, a single kink."""

    def __init__(self, at: float = 0.0, scale: float = 1.0):
        self.at = float(at)
        self.scale = float(scale)
        self.kinks = (self.at,)

    def __call__(self, u):
        return self.scale * np.abs(np.asarray(u, dtype=float) - self.at)

    def __repr__(self):
        return f"Abs(at={self.at}, scale={self.scale})"


class Const(Poly):
    def __init__(self, value: float):
        super().__init__([value])


def as_function(spec) -> Callable:
    """Coerce a function spec: callable, number, or coefficient sequence."""
    if callable(spec):
        return spec
    if isinstance(spec, (int, float)):
        return Const(spec)
    try:
        return Poly(spec)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot interpret function spec {spec!r}") from None


def _kinks(f) -> tuple:
    return tuple(getattr(f, "kinks", ()))


# ------------------------------------------------------------ distributions


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ConfigError("uniform distribution needs hi > lo")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.lo) & (x <= self.hi), 1.0 / (self.hi - self.lo), 0.0)

    def sample(self, rng, n):
        return rng.uniform(self.lo, self.hi, n)

    @property
    def support(self):
        return (self.lo, self.hi)


@dataclass(frozen=True)
class TruncatedNormal:
    mean: float
    sd: float
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.sd > 0 and self.hi > self.lo):
            raise ConfigError("truncated normal needs sd > 0 and hi > lo")

    @property
    def _mass(self):
        return ndtr((self.hi - self.mean) / self.sd) - ndtr((self.lo - self.mean) / self.sd)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x - self.mean) / self.sd
        dens = np.exp(-0.5 * z * z) / (self.sd * math.sqrt(2 * math.pi) * self._mass)
        return np.where((x >= self.lo) & (x <= self.hi), dens, 0.0)

    def sample(self, rng, n):
        out = np.empty(0)
        while out.size < n:
            draw = rng.normal(self.mean, self.sd, 2 * (n - out.size) + 16)
            out = np.concatenate([out, draw[(draw >= self.lo) & (draw <= self.hi)]])
        return out[:n]

    @property
    def support(self):
        return (self.lo, self.hi)


@dataclass(frozen=True)
class SamplerDist:
    """Distribution known only through a sampler; forces Monte Carlo estimands."""

    sampler: Callable
    lo: float
    hi: float
    pdf = None

    def sample(self, rng, n):
        return np.asarray(self.sampler(rng, n), dtype=float)

    @property
    def support(self):
        return (self.lo, self.hi)


# ------------------------------------------------------------- error models


@dataclass(frozen=True)
class ErrorModel:
    """Measurement error linking latent ``x_star`` and observed ``x = x_star - e``.

    ``round_down``
        ``x = granularity * floor(x_star / granularity)``; ``e`` in ``[0, g)``.
    ``berkson_uniform``
        ``e ~ U[-width/2, width/2]`` independent of the observed ``x``;
        the DGP's ``x_star`` distribution is then read as that of ``x``.
    ``classical_bounded``
        ``e ~ N(0, sd^2)`` truncated to ``[-truncation, truncation]``,
        independent of ``x_star``.
    """

    kind: str
    granularity: float = 1.0
    width: float = 1.0
    sd: float = 0.5
    truncation: float = 1.0

    def __post_init__(self):
        if self.kind not in ("round_down", "berkson_uniform", "classical_bounded", "none"):
            raise ConfigError(f"unknown error model {self.kind!r}")
        if self.kind == "round_down" and not self.granularity > 0:
            raise ConfigError("granularity must be positive")
        if self.kind == "berkson_uniform" and not self.width > 0:
            raise ConfigError("Berkson width must be positive")
        if self.kind == "classical_bounded" and not (self.sd > 0 and self.truncation > 0):
            raise ConfigError("classical error needs sd > 0 and truncation > 0")

    @property
    def error_support(self) -> tuple[float, float]:
        if self.kind == "round_down":
            return (0.0, self.granularity)
        if self.kind == "berkson_uniform":
            return (-self.width / 2, self.width / 2)
        if self.kind == "classical_bounded":
            return (-self.truncation, self.truncation)
        return (0.0, 0.0)

    @property
    def doughnut(self) -> float:
        """Smallest ``s`` for which trimming ``[-s, s)`` restores correct classification."""
        if self.kind in ("round_down", "none"):
            return 0.0
        lo, hi = self.error_support
        return max(-lo, hi)

    def error_density(self):
        if self.kind == "berkson_uniform":
            return Uniform(-self.width / 2, self.width / 2)
        if self.kind == "classical_bounded":
            return TruncatedNormal(0.0, self.sd, -self.truncation, self.truncation)
        return None


# -------------------------------------------------------------------- DGP


@dataclass
class Dgp:
    g0: Callable = field(default_factory=lambda: Const(0.0))
    g1: Callable = field(default_factory=lambda: Const(0.0))
    error: ErrorModel = field(default_factory=lambda: ErrorModel("none"))
    x_star: object = field(default_factory=lambda: Uniform(-1.0, 1.0))
    noise_sd: float = 1.0
    compliance: Callable | None = None

    def __post_init__(self):
        self.g0 = as_function(self.g0)
        self.g1 = as_function(self.g1)
        if self.compliance is not None:
            self.compliance = as_function(self.compliance)
        if not self.noise_sd >= 0:
            raise ConfigError("noise_sd must be non-negative")
        lo, hi = self.x_star.support
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ConfigError("running variable must have bounded support")
        if self.compliance is not None:
            grid = np.linspace(min(lo, 0.0), max(hi, 0.0), 513)
            pc = np.asarray(self.compliance(grid), dtype=float)
            if np.any((pc < -1e-12) | (pc > 1 + 1e-12)):
                raise ConfigError("compliance probabilities must lie in [0, 1]")

    @property
    def sharp(self) -> bool:
        return self.compliance is None

    def tau_star_fn(self, x):
        """Latent effect ``g1(x) - g0(x)``."""
        return np.asarray(self.g1(x), dtype=float) - np.asarray(self.g0(x), dtype=float)


@dataclass(frozen=True, eq=False)
class SimSample:
    y: np.ndarray
    t: np.ndarray
    x: np.ndarray
    x_star: np.ndarray
    e: np.ndarray

    def to_rd_sample(self, doughnut_s: float = 0.0, design: str | None = None) -> RdSample:
        fuzzy = not np.array_equal(self.t, (self.x_star >= 0).astype(float))
        d = design or ("fuzzy" if fuzzy else "sharp")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return doughnut_trim(RdSample(self.y, self.t, self.x, design=d), doughnut_s)


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    """Counter-based stream for replication ``rep``; independent of run order."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(rep),))
    return np.random.Generator(np.random.Philox(ss))


def generate(dgp: Dgp, n: int, seed=0) -> SimSample:
    """Draw ``n`` observations. ``seed`` may be an int or a Generator."""
    if n < 1:
        raise InvalidParameter("n must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else replication_rng(seed, 0)
    err = dgp.error
    if err.kind == "berkson_uniform":
        x = dgp.x_star.sample(rng, n)
        e = rng.uniform(-err.width / 2, err.width / 2, n)
        x_star = x + e
    else:
        x_star = dgp.x_star.sample(rng, n)
        if err.kind == "round_down":
            x = round_down(x_star, err.granularity)
        elif err.kind == "classical_bounded":
            x = x_star - err.error_density().sample(rng, n)
        else:
            x = x_star.copy()
        e = x_star - x
    z = (x_star >= 0).astype(float)
    if dgp.compliance is None:
        t = z
    else:
        pc = np.clip(np.asarray(dgp.compliance(x_star), dtype=float), 0.0, 1.0)
        t = z * (rng.uniform(size=n) < pc)
    mean = np.where(t == 1, dgp.g1(x_star), dgp.g0(x_star))
    y = mean + (rng.normal(0.0, dgp.noise_sd, n) if dgp.noise_sd > 0 else 0.0)
    return SimSample(np.asarray(y, dtype=float), t.astype(float), x, x_star, e)


# --------------------------------------------------------- exact estimands


@dataclass(frozen=True)
class TrueEstimand:
    tau: float
    tau_star: float
    method: str
    se: float = 0.0
    bayes_normalized: bool = False
    ratio_of_averages: float | None = None


def _quad(f, lo, hi, points=()):
    pts = sorted(p for p in points if lo < p < hi)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, lo, hi, points=pts or None, epsabs=1e-13, epsrel=1e-10, limit=200)
        except integrate.IntegrationWarning as exc:
            raise NumericError(f"quadrature did not converge: {exc}") from None
    return val


def conditional_error_density(dgp: Dgp):
    """Density of ``e`` given ``x = 0`` as ``(pdf, lo, hi, bayes_normalized)``.

    Returns ``None`` when the latent distribution has no density.
    """
    err = dgp.error
    if err.kind == "none":
        raise UndefinedEstimand("no measurement error: e is degenerate at 0")
    lo, hi = err.error_support
    if err.kind == "berkson_uniform":
        w = err.width
        return (lambda e: np.where((e >= lo) & (e <= hi), 1.0 / w, 0.0)), lo, hi, False
    fx = getattr(dgp.x_star, "pdf", None)
    if fx is None:
        return None
    fe = (lambda e: 1.0) if err.kind == "round_down" else err.error_density().pdf
    # x = 0 means x_star = e, so f(e | x=0) is proportional to f_xstar(e) f_e(e)
    kernel = lambda e: float(fx(e)) * float(fe(e))
    mass = _quad(kernel, lo, hi)
    if mass <= 0:
        raise UndefinedEstimand("x = 0 has zero probability under this DGP")
    grid = np.linspace(lo, hi, 65)[:-1]
    flat = np.ptp(np.asarray(fx(grid), dtype=float)) <= 1e-12
    return (lambda e: kernel(e) / mass), lo, hi, not flat


def _uniform_weights(dgp: Dgp):
    dens = conditional_error_density(dgp)
    if dens is None:
        return None
    pdf, lo, hi, bayes = dens
    uniform = dgp.error.kind in ("round_down", "berkson_uniform") and not bayes
    return pdf, lo, hi, bayes, uniform


def _poly_mean_uniform(coeffs, lo, hi):
    # closed-form average of a polynomial over [lo, hi]
    total = sum(c * (hi ** (k + 1) - lo ** (k + 1)) / (k + 1) for k, c in enumerate(coeffs))
    return total / (hi - lo)


def _mc_at_zero(dgp: Dgp, fn, draws=400_000, seed=12345, window=1e-3):
    """Monte Carlo mean of ``fn(x_star)`` given ``x = 0`` (or ``|x| < window``)."""
    rng = replication_rng(seed, 0)
    s = generate(Dgp(dgp.g0, dgp.g1, dgp.error, dgp.x_star, 0.0, dgp.compliance), draws, rng)
    keep = (s.x == 0) if dgp.error.kind == "round_down" else (np.abs(s.x) < window)
    vals = np.asarray(fn(s.x_star[keep]), dtype=float)
    if vals.size < 2:
        raise UndefinedEstimand("too few draws near x = 0 for a Monte Carlo estimand")
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))


def true_tau(dgp: Dgp) -> TrueEstimand:
    """Effect for units observed at the cutoff, with the latent-cutoff effect for contrast.

    Closed form when the effect is polynomial and ``e | x = 0`` is uniform;
    adaptive quadrature otherwise; Monte Carlo when the latent distribution
    has no density.
    """
    tau_star = float(dgp.tau_star_fn(0.0))
    if dgp.error.kind == "none":
        return TrueEstimand(tau_star, tau_star, "exact")
    info = _uniform_weights(dgp)
    if info is None:
        val, se = _mc_at_zero(dgp, dgp.tau_star_fn)
        return TrueEstimand(val, tau_star, "monte_carlo", se=se)
    pdf, lo, hi, bayes, uniform = info
    if uniform and isinstance(dgp.g0, Poly) and isinstance(dgp.g1, Poly):
        n = max(len(dgp.g0.coeffs), len(dgp.g1.coeffs))
        c = np.zeros(n)
        c[: len(dgp.g1.coeffs)] += dgp.g1.coeffs
        c[: len(dgp.g0.coeffs)] -= dgp.g0.coeffs
        return TrueEstimand(float(_poly_mean_uniform(c, lo, hi)), tau_star, "closed_form", bayes_normalized=bayes)
    pts = _kinks(dgp.g0) + _kinks(dgp.g1)
    try:
        val = _quad(lambda e: float(dgp.tau_star_fn(e)) * pdf(e), lo, hi, pts)
    except NumericError:
        val, se = _mc_at_zero(dgp, dgp.tau_star_fn)
        return TrueEstimand(val, tau_star, "monte_carlo", se=se, bayes_normalized=bayes)
    return TrueEstimand(val, tau_star, "quadrature", bayes_normalized=bayes)


def true_tau_fuzzy(dgp: Dgp) -> TrueEstimand:
    """Compliance-weighted average effect for compliers observed at the cutoff.

    ``ratio_of_averages`` holds the reduced-form average over the
    first-stage average; with one-sided compliance it coincides with the
    weighted integral.
    """
    if dgp.compliance is None:
        raise InvalidParameter("true_tau_fuzzy needs a DGP with a compliance function")
    pc = dgp.compliance
    pc0 = float(pc(0.0))
    # effects do not vary with compliance type, so the latent LATE is tau*(0)
    tau_f_star = float(dgp.tau_star_fn(0.0))
    if dgp.error.kind == "none":
        if pc0 <= 0:
            raise UndefinedEstimand("no compliers at the cutoff; the instrument is irrelevant")
        return TrueEstimand(tau_f_star, tau_f_star, "exact", ratio_of_averages=tau_f_star)
    dens = conditional_error_density(dgp)
    pts = _kinks(dgp.g0) + _kinks(dgp.g1) + _kinks(pc)
    if dens is not None:
        pdf, lo, hi, bayes = dens
        try:
            den = _quad(lambda e: float(pc(e)) * pdf(e), lo, hi, pts)
            num = _quad(lambda e: float(dgp.tau_star_fn(e)) * float(pc(e)) * pdf(e), lo, hi, pts)
            method = "quadrature"
        except NumericError:
            dens = None
    if dens is None:
        bayes = False
        den, _ = _mc_at_zero(dgp, pc)
        num, _ = _mc_at_zero(dgp, lambda u: dgp.tau_star_fn(u) * pc(u))
        method = "monte_carlo"
    if not den > 1e-14:
        raise UndefinedEstimand("zero compliance mass at x = 0; the instrument is irrelevant")
    val = float(num / den)
    return TrueEstimand(val, tau_f_star, method, bayes_normalized=bayes, ratio_of_averages=num / den)


# ------------------------------------------------------ coverage experiments


@dataclass(frozen=True)
class MethodConfig:
    """Estimator and interval used in a coverage experiment.

    ``h`` is a positive bandwidth or ``"auto"`` (optimized per replication
    with the true ``M``). For fuzzy DGPs the bias-aware method reports the
    AR confidence set (bandwidth held at ``h``) with bounds ``M`` and ``Mt``.
    """

    method: str = "bias_aware"
    h: float | str = "auto"
    M: float = 0.0
    Mt: float = 0.0
    alpha: float = 0.05
    doughnut_s: float = 0.0
    criterion: str = "worst_case_mse"
    q: int = 1

    def __post_init__(self):
        if self.method not in ("bias_aware", "ols"):
            raise ConfigError(f"method must be 'bias_aware' or 'ols', got {self.method!r}")
        if self.h != "auto" and not float(self.h) > 0:
            raise ConfigError("h must be positive or 'auto'")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")


REP_FIELDS = ("rep", "estimate", "se", "lower", "upper", "h", "n_eff", "covered", "failed", "error")


def run_replication(dgp: Dgp, config: MethodConfig, n: int, seed: int, rep: int, truth: float) -> dict:
    row = dict.fromkeys(REP_FIELDS, math.nan)
    row.update(rep=rep, covered=False, failed=False, error="")
    try:
        s = generate(dgp, n, replication_rng(seed, rep))
        sample = s.to_rd_sample(config.doughnut_s, "sharp" if dgp.sharp else "fuzzy")
        h = config.h
        if h == "auto":
            h = optimize_bandwidth(sample, config.M, config.alpha, config.criterion, "y")
        h = float(h)
        if dgp.sharp:
            est = fit(sample, "y", h, config.q)
            ci = bias_aware_ci(est, config.M, config.alpha) if config.method == "bias_aware" else naive_ci(est, config.alpha)
            row.update(estimate=est.estimate, se=est.se_ehw, lower=ci.lower, upper=ci.upper, n_eff=est.n_eff)
        else:
            fe = fuzzy_estimate(sample, h, config.q)
            row.update(estimate=fe.ratio, se=fe.se_delta, n_eff=fe.n_eff)
            if config.method == "bias_aware":
                cs = ar_confidence_set(sample, config.M, config.Mt, config.alpha, h_policy=h)
                lo, hi = cs.hull
                row.update(lower=lo, upper=hi)
                row["covered"] = truth in cs
            else:
                z = float(ndtri(1 - config.alpha / 2))
                row.update(lower=fe.ratio - z * fe.se_delta, upper=fe.ratio + z * fe.se_delta)
        row["h"] = h
        if dgp.sharp or config.method == "ols":
            row["covered"] = bool(row["lower"] <= truth <= row["upper"])
    except RdError as exc:
        row.update(failed=True, error=f"{type(exc).__name__}: {exc}")
    return row


def _run_chunk(args):
    dgp, config, n, seed, reps, truth = args
    return [run_replication(dgp, config, n, seed, r, truth) for r in reps]


@dataclass
class CoverageResult:
    coverage: float
    avg_length: float
    avg_bias: float
    reps: int
    failures: int
    truth: float
    tau_star: float
    rows: list = field(repr=False, default_factory=list)

    def summary(self) -> dict:
        return {
            "reps": self.reps,
            "failures": self.failures,
            "true_value": self.truth,
            "latent_cutoff_value": self.tau_star,
            "coverage": self.coverage,
            "avg_length": self.avg_length,
            "avg_bias": self.avg_bias,
        }


def coverage_experiment(
    dgp: Dgp,
    method_config: MethodConfig,
    reps: int = 1000,
    seed: int = 0,
    n: int = 1000,
    workers: int = 1,
) -> CoverageResult:
    """Monte Carlo coverage of the configured interval for the true estimand.

    Failed replications (e.g. too few support points) are counted and
    excluded from the averages. Means use exactly rounded summation, so
    the summary does not depend on evaluation order.
    """
    if reps < 100:
        raise InvalidParameter("coverage experiments need at least 100 replications")
    truth_info = true_tau(dgp) if dgp.sharp else true_tau_fuzzy(dgp)
    truth = truth_info.tau
    if workers > 1:
        chunks = [range(i, reps, workers) for i in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            parts = pool.map(_run_chunk, [(dgp, method_config, n, seed, c, truth) for c in chunks])
            rows = sorted((r for part in parts for r in part), key=lambda r: r["rep"])
    else:
        rows = [run_replication(dgp, method_config, n, seed, r, truth) for r in range(reps)]
    ok = [r for r in rows if not r["failed"]]
    k = len(ok)
    if k == 0:
        return CoverageResult(math.nan, math.nan, math.nan, reps, reps, truth, truth_info.tau_star, rows)
    coverage = math.fsum(1.0 for r in ok if r["covered"]) / k
    avg_length = math.fsum(r["upper"] - r["lower"] for r in ok) / k
    avg_bias = math.fsum(r["estimate"] - truth for r in ok) / k
    return CoverageResult(coverage, avg_length, avg_bias, reps, reps - k, truth, truth_info.tau_star, rows)


# --------------------------------------------------------- smoothing check


@dataclass(frozen=True)
class UniformError:
    """Berkson-type uniform error on ``[-half_width, half_width]``."""

    half_width: float = 1.0

    def support(self, x):
        return (-self.half_width, self.half_width)

    def pdf(self, e, x):
        return 1.0 / (2 * self.half_width) if abs(e) <= self.half_width else 0.0


@dataclass(frozen=True)
class SwitchingUniformError:
    """Uniform error whose width jumps at ``x = switch``.

    The conditional density is not smooth in ``x``, the failure mode under
    which measurement error can make the conditional mean non-smooth.
    """

    switch: float = 0.0
    half_width_below: float = 1.0
    half_width_above: float = 0.5

    def _w(self, x):
        return self.half_width_below if x < self.switch else self.half_width_above

    def support(self, x):
        w = self._w(x)
        return (-w, w)

    def pdf(self, e, x):
        w = self._w(x)
        return 1.0 / (2 * w) if abs(e) <= w else 0.0


@dataclass(frozen=True)
class SmoothingCheck:
    bound: float
    x: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)
    second_diff: np.ndarray = field(repr=False)


def smoothing_check(h_spec, error_density, grid_step: float, x_range=(-1.0, 1.0)) -> SmoothingCheck:
    """Largest second difference of ``g(x) = E[h(x + e) | x]`` on a grid.

    ``g`` is evaluated by adaptive quadrature at ``x - step, x, x + step``
    for grid points in ``x_range``; the bound is
    ``max |g(x+d) - 2 g(x) + g(x-d)| / d^2``.
    """
    if not grid_step > 0:
        raise InvalidParameter("grid_step must be positive")
    h = as_function(h_spec)
    lo, hi = x_range
    if not hi > lo:
        raise InvalidParameter("x_range must be increasing")
    x = np.arange(lo, hi + 0.5 * grid_step, grid_step)
    xs = np.concatenate([[x[0] - grid_step], x, [x[-1] + grid_step]])

    def g_at(xv):
        a, b = error_density.support(xv)
        kinks = [k - xv for k in _kinks(h)]
        return _quad(lambda e: float(h(xv + e)) * error_density.pdf(e, xv), a, b, kinks)

    g = np.array([g_at(float(v)) for v in xs])
    d2 = (g[2:] - 2 * g[1:-1] + g[:-2]) / grid_step**2
    return SmoothingCheck(float(np.max(np.abs(d2))), x, g[1:-1], d2)
