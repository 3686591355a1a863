from pathlib import Path

import pytest

from rdmerr.config import (
    MSource,
    SpecConfig,
    load_analysis_config,
    load_simulation_config,
    parse_call,
    parse_distribution,
    parse_error_density,
    parse_function,
)
from rdmerr.errors import ConfigError
from rdmerr.simulation import Abs, Poly, SwitchingUniformError, TruncatedNormal, Uniform, UniformError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_parse_call():
    assert parse_call("fixed(0.5)") == ("fixed", [0.5])
    assert parse_call(" rot_ak ") == ("rot_ak", [])
    assert parse_call("uniform(-6, 6)") == ("uniform", [-6.0, 6.0])
    with pytest.raises(ConfigError):
        parse_call("2x(")
    with pytest.raises(ConfigError):
        parse_call("fixed(a)")


def test_parse_function():
    p = parse_function("1, 2, 3")
    assert isinstance(p, Poly) and p.coeffs == (1.0, 2.0, 3.0)
    assert parse_function("poly(0, 1)").coeffs == (0.0, 1.0)
    a = parse_function("abs(0.5, 2)")
    assert isinstance(a, Abs) and (a.at, a.scale) == (0.5, 2.0)
    assert isinstance(parse_function("abs"), Abs)


def test_parse_distribution():
    assert parse_distribution("uniform(-1, 2)") == Uniform(-1.0, 2.0)
    assert parse_distribution("truncnorm(0, 1, -2, 2)") == TruncatedNormal(0.0, 1.0, -2.0, 2.0)
    with pytest.raises(ConfigError):
        parse_distribution("cauchy(0, 1)")
    with pytest.raises(ConfigError):
        parse_distribution("uniform(1)")


def test_parse_error_density():
    assert parse_error_density("berkson_uniform(2)") == UniformError(2.0)
    assert parse_error_density("switching_uniform(0, 1, 0.5)") == SwitchingUniformError(0.0, 1.0, 0.5)
    with pytest.raises(ConfigError):
        parse_error_density("laplace")


def test_msource():
    assert MSource.parse("fixed(0.25)") == MSource("fixed", 0.25)
    assert MSource.parse("rot_iw") == MSource("rot_iw", 2.0)
    assert MSource.parse("rot_iw(3)") == MSource("rot_iw", 3.0)
    assert str(MSource.parse("fixed(0.25)")) == "fixed(0.25)"
    for bad in ("fixed(-1)", "fixed", "guess"):
        with pytest.raises(ConfigError):
            MSource.parse(bad)


@pytest.mark.parametrize(
    "kw",
    [
        dict(method="ridge"),
        dict(method="ols", h="auto"),
        dict(method="ols", h=-1.0),
        dict(method="ols", h=1.0, alpha=1.5),
        dict(method="bias_aware", h=1.0, q=2, M_y=MSource("rot_ak")),
        dict(method="bias_aware", h=1.0),
        dict(method="ols", h=1.0, criterion="aic"),
        dict(method="ols", h=1.0, ar_policy="never"),
    ],
)
def test_spec_validation(kw):
    with pytest.raises(ConfigError):
        SpecConfig("x", **kw).validate()


def test_example_analysis_config():
    cfg = load_analysis_config(CONFIGS / "analysis_example.ini")
    cfg.validate()
    assert cfg.design == "fuzzy" and cfg.cutoff == 0.0 and cfg.doughnut_s == 0.0
    assert Path(cfg.csv) == CONFIGS / "example_fuzzy.csv"
    assert [s.label for s in cfg.specs] == ["1", "2", "3", "4", "5"]
    s1, s2, s3, s4, s5 = cfg.specs
    assert (s1.method, s1.h, s1.q) == ("ols", 5.0, 1)
    assert s2.q == 2
    assert s3.M_y == s3.M_t == MSource("rot_ak")
    assert s4.M_y == MSource("rot_iw", 2.0)
    assert (s5.M_y, s5.M_t, s5.criterion) == (MSource("fixed", 0.01), MSource("fixed", 0.002), "ci_length")


def test_analysis_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_analysis_config(tmp_path / "missing.ini")
    p = tmp_path / "bad.ini"
    p.write_text("[data]\ncutoff = abc\n")
    with pytest.raises(ConfigError):
        load_analysis_config(p)
    p.write_text("[data]\ncutoff = 0\n")
    with pytest.raises(ConfigError):
        load_analysis_config(p).validate()


def test_example_simulation_configs():
    cov = load_simulation_config(CONFIGS / "rounding_coverage.ini")
    assert (cov.task, cov.n, cov.reps, cov.seed) == ("coverage", 2000, 200, 20240601)
    assert cov.dgp.error.kind == "round_down"
    assert cov.dgp.g1.coeffs == (1.0, 2.0)
    assert cov.method.h == "auto" and cov.method.M == 0.0
    sm = load_simulation_config(CONFIGS / "smoothing_check.ini")
    assert sm.task == "smoothing_check"
    assert sm.smoothing["error"] == UniformError(1.0)
    assert sm.smoothing["x_range"] == (-1.0, 1.0)


@pytest.mark.parametrize(
    "text",
    [
        "[run]\ntask = dance\n",
        "[run]\ntask = coverage\n",
        "[run]\ntask = coverage\n[dgp]\ng1 = 1\n",
        "[run]\ntask = smoothing_check\n",
        "[run]\ntask = estimand\nn = many\n[dgp]\ng1 = 1\n",
    ],
)
def test_simulation_config_errors(tmp_path, text):
    p = tmp_path / "sim.ini"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_simulation_config(p)
