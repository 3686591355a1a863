"""Flat key-value configuration files (INI sections) for the CLI.

See ``configs/`` in the repository for annotated examples.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .simulation import (
    Abs,
    Dgp,
    ErrorModel,
    MethodConfig,
    Poly,
    SwitchingUniformError,
    TruncatedNormal,
    Uniform,
    UniformError,
)

_CALL = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def _numbers(text: str) -> list[float]:
    text = text.strip()
    if not text:
        return []
    try:
        return [float(tok) for tok in text.split(",")]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def parse_call(text: str) -> tuple[str, list[float]]:
    """``"name(1, 2)"`` -> ``("name", [1.0, 2.0])``; bare names have no args."""
    m = _CALL.match(text.strip().lower())
    if not m:
        raise ConfigError(f"cannot parse {text!r}; expected name or name(a, b, ...)")
    return m.group(1), _numbers(m.group(2) or "")


def parse_function(text: str):
    """Polynomial coefficients (ascending) or ``abs`` / ``abs(at, scale)``."""
    stripped = text.strip()
    if stripped.lower().startswith("abs"):
        name, args = parse_call(stripped)
        return Abs(*args)
    if stripped.lower().startswith("poly"):
        return Poly(parse_call(stripped)[1])
    return Poly(_numbers(stripped))


def parse_distribution(text: str):
    name, args = parse_call(text)
    try:
        if name == "uniform":
            return Uniform(*args)
        if name in ("truncnorm", "truncated_normal"):
            return TruncatedNormal(*args)
    except TypeError:
        raise ConfigError(f"wrong number of arguments in {text!r}") from None
    raise ConfigError(f"unknown distribution {name!r}")


def parse_error_model(section) -> ErrorModel:
    kind = section.get("error", "none").strip()
    kw = {}
    for key in ("granularity", "width", "sd", "truncation"):
        if key in section:
            kw[key] = section.getfloat(key)
    return ErrorModel(kind, **kw)


def parse_error_density(text: str):
    name, args = parse_call(text)
    if name in ("berkson_uniform", "uniform"):
        return UniformError(*(args or [1.0]))
    if name in ("switching_uniform",):
        return SwitchingUniformError(*args)
    raise ConfigError(f"unknown error density {name!r}")


def _read(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    if not Path(path).exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    return cp


# ------------------------------------------------------------------ analysis


@dataclass
class MSource:
    """Where a curvature bound comes from: a fixed value or a rule of thumb."""

    kind: str
    value: float = 0.0

    @classmethod
    def parse(cls, text: str) -> "MSource":
        name, args = parse_call(text)
        if name == "fixed":
            if len(args) != 1 or args[0] < 0:
                raise ConfigError(f"fixed(...) needs one non-negative value, got {text!r}")
            return cls("fixed", args[0])
        if name == "rot_ak" and not args:
            return cls(name)
        if name == "rot_iw" and len(args) <= 1:
            return cls(name, args[0] if args else 2.0)
        raise ConfigError(f"M source must be fixed(v), rot_ak or rot_iw, got {text!r}")

    def __str__(self):
        return f"fixed({self.value:g})" if self.kind == "fixed" else self.kind


@dataclass
class SpecConfig:
    label: str
    method: str = "ols"
    h: float | str = "auto"
    q: int = 1
    M_y: MSource | None = None
    M_t: MSource | None = None
    alpha: float = 0.05
    criterion: str = "worst_case_mse"
    ar_policy: str = "reoptimize"

    def validate(self):
        if self.method not in ("ols", "bias_aware"):
            raise ConfigError(f"[{self.label}] method must be 'ols' or 'bias_aware'")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"[{self.label}] alpha must lie in (0, 1)")
        if self.h == "auto":
            if self.method == "ols":
                raise ConfigError(f"[{self.label}] h = auto needs method = bias_aware")
        elif not self.h > 0:
            raise ConfigError(f"[{self.label}] h must be positive")
        if self.method == "bias_aware":
            if self.q != 1:
                raise ConfigError(f"[{self.label}] bias-aware inference is implemented for q = 1 only")
            if self.M_y is None:
                raise ConfigError(f"[{self.label}] bias_aware needs M_source (or M_y / M_t)")
        if self.criterion not in ("worst_case_mse", "ci_length"):
            raise ConfigError(f"[{self.label}] criterion must be worst_case_mse or ci_length")
        if self.ar_policy not in ("reoptimize", "fixed"):
            raise ConfigError(f"[{self.label}] ar_policy must be reoptimize or fixed")


@dataclass
class AnalysisConfig:
    csv: str | None = None
    cutoff: float = 0.0
    design: str = "sharp"
    doughnut_s: float = 0.0
    t_aggregated: bool = False
    out_dir: str = "."
    specs: list = field(default_factory=list)

    def validate(self):
        if self.design not in ("sharp", "fuzzy"):
            raise ConfigError("design must be sharp or fuzzy")
        if self.doughnut_s < 0:
            raise ConfigError("doughnut must be non-negative")
        if not self.specs:
            raise ConfigError("at least one [spec ...] section is required")
        for s in self.specs:
            s.validate()


def _spec_from_section(label: str, sec) -> SpecConfig:
    h_raw = sec.get("h", "auto").strip()
    h = "auto" if h_raw == "auto" else float(h_raw)
    default_m = sec.get("M_source")
    m_y = sec.get("M_y", default_m)
    m_t = sec.get("M_t", default_m)
    return SpecConfig(
        label=sec.get("label", label),
        method=sec.get("method", "ols").strip(),
        h=h,
        q=sec.getint("q", 1),
        M_y=MSource.parse(m_y) if m_y else None,
        M_t=MSource.parse(m_t) if m_t else None,
        alpha=sec.getfloat("alpha", 0.05),
        criterion=sec.get("criterion", "worst_case_mse").strip(),
        ar_policy=sec.get("ar_policy", "reoptimize").strip(),
    )


def load_analysis_config(path) -> AnalysisConfig:
    cp = _read(path)
    data = cp["data"] if cp.has_section("data") else {}
    out = cp["output"] if cp.has_section("output") else {}
    try:
        cfg = AnalysisConfig(
            csv=data.get("csv"),
            cutoff=float(data.get("cutoff", 0.0)),
            design=data.get("design", "sharp").strip(),
            doughnut_s=float(data.get("doughnut", 0.0)),
            t_aggregated=str(data.get("t_aggregated", "false")).lower() in ("1", "true", "yes"),
            out_dir=out.get("out_dir", "."),
        )
        for name in cp.sections():
            if name.startswith("spec"):
                label = name[4:].strip() or str(len(cfg.specs) + 1)
                cfg.specs.append(_spec_from_section(label, cp[name]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.csv and not Path(cfg.csv).is_absolute():
        cfg.csv = str(Path(path).parent / cfg.csv)
    return cfg


# ---------------------------------------------------------------- simulation


@dataclass
class SimulationConfig:
    task: str
    dgp: Dgp | None
    method: MethodConfig | None
    n: int = 1000
    reps: int = 500
    seed: int = 0
    workers: int = 1
    smoothing: dict = field(default_factory=dict)


def parse_dgp(sec) -> Dgp:
    compliance = sec.get("compliance", "").strip()
    return Dgp(
        g0=parse_function(sec.get("g0", "0")),
        g1=parse_function(sec.get("g1", "0")),
        error=parse_error_model(sec),
        x_star=parse_distribution(sec.get("x_star", "uniform(-1, 1)")),
        noise_sd=sec.getfloat("noise_sd", 1.0),
        compliance=parse_function(compliance) if compliance else None,
    )


def load_simulation_config(path) -> SimulationConfig:
    cp = _read(path)
    run = cp["run"] if cp.has_section("run") else {}
    task = run.get("task", "coverage").strip()
    if task not in ("coverage", "estimand", "smoothing_check"):
        raise ConfigError(f"task must be coverage, estimand or smoothing_check, got {task!r}")
    try:
        dgp = parse_dgp(cp["dgp"]) if cp.has_section("dgp") else None
        method = None
        if cp.has_section("method"):
            m = cp["method"]
            h_raw = m.get("h", "auto").strip()
            method = MethodConfig(
                method=m.get("method", "bias_aware").strip(),
                h="auto" if h_raw == "auto" else float(h_raw),
                M=m.getfloat("M", 0.0),
                Mt=m.getfloat("Mt", 0.0),
                alpha=m.getfloat("alpha", 0.05),
                doughnut_s=m.getfloat("doughnut", 0.0),
                criterion=m.get("criterion", "worst_case_mse").strip(),
            )
        smoothing = {}
        if cp.has_section("smoothing"):
            s = cp["smoothing"]
            smoothing = {
                "h": parse_function(s.get("h", "abs")),
                "error": parse_error_density(s.get("error", "berkson_uniform(1)")),
                "grid_step": s.getfloat("grid_step", 0.01),
                "x_range": tuple(_numbers(s.get("x_range", "-1, 1"))),
            }
        cfg = SimulationConfig(
            task=task,
            dgp=dgp,
            method=method,
            n=int(run.get("n", 1000)),
            reps=int(run.get("reps", 500)),
            seed=int(run.get("seed", 0)),
            workers=int(run.get("workers", 1)),
            smoothing=smoothing,
        )
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    if task in ("coverage", "estimand") and dgp is None:
        raise ConfigError(f"task {task!r} needs a [dgp] section")
    if task == "coverage" and method is None:
        raise ConfigError("task 'coverage' needs a [method] section")
    if task == "smoothing_check" and not smoothing:
        raise ConfigError("task 'smoothing_check' needs a [smoothing] section")
    return cfg
