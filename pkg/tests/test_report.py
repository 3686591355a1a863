import math
import re

import numpy as np
import pytest

from rdmerr import RdSample
from rdmerr.config import AnalysisConfig, MSource, SpecConfig
from rdmerr.data import rescale_factor
from rdmerr.fuzzy import ar_confidence_set, fuzzy_estimate
from rdmerr.plotting import BinRule, binned_plot_data, write_bins_csv
from rdmerr.report import (
    fmt_ci,
    fmt_count,
    fmt_num,
    format_text,
    read_report_csv,
    run_analysis,
    write_report_csv,
)
from rdmerr.simulation import Dgp, Poly, Uniform, generate
from rdmerr.errors import InvalidParameter


def _specs():
    return [
        SpecConfig("1", "ols", 0.5),
        SpecConfig("2", "bias_aware", 0.5, M_y=MSource("fixed", 0.5), M_t=MSource("fixed", 0.5), ar_policy="fixed"),
        SpecConfig("3", "bias_aware", "auto", M_y=MSource("rot_iw", 2.0), M_t=MSource("rot_iw", 2.0)),
    ]


@pytest.fixture(scope="module")
def fuzzy_sample():
    dgp = Dgp(g0=Poly([0, 1]), g1=Poly([2, 1]), x_star=Uniform(-1, 1), compliance=0.6, noise_sd=0.5)
    s = generate(dgp, 3000, 17)
    return s.to_rd_sample(design="fuzzy")


@pytest.fixture(scope="module")
def fuzzy_report(fuzzy_sample):
    cfg = AnalysisConfig(design="fuzzy", specs=_specs())
    return run_analysis(cfg, fuzzy_sample)


def test_formatting_helpers():
    assert fmt_num(0.0284) == "0.028"
    assert fmt_num(math.nan) == "" and fmt_num(None) == ""
    assert fmt_num(math.inf) == "inf"
    assert fmt_count(63220) == "63,220"
    assert fmt_ci(0.3734, 0.3956) == "(0.373, 0.396)"


def test_fuzzy_panels_and_schema(fuzzy_report):
    assert fuzzy_report.ok
    assert len(fuzzy_report.rows) == 9
    for r in fuzzy_report.rows:
        if r.method == "ols":
            assert r.rescaled_M is None
        else:
            assert r.rescaled_M is not None and r.rescaled_M >= 0
    assert [r.panel for r in fuzzy_report.rows[:3]] == ["first_stage", "reduced_form", "fuzzy"]


def test_rescaled_M_uses_scale(fuzzy_report, fuzzy_sample):
    row = [r for r in fuzzy_report.rows if r.panel == "reduced_form" and r.label == "2"][0]
    assert row.rescaled_M == pytest.approx(0.5 * rescale_factor(fuzzy_sample).scale)


def test_fixed_h_fuzzy_row_contains_ratio(fuzzy_report, fuzzy_sample):
    row = [r for r in fuzzy_report.rows if r.panel == "fuzzy" and r.label == "2"][0]
    fe = fuzzy_estimate(fuzzy_sample, 0.5)
    assert row.estimate == fe.ratio
    assert row.ci_lower <= fe.ratio <= row.ci_upper
    cs = ar_confidence_set(fuzzy_sample, 0.5, 0.5, h_policy=0.5)
    assert (row.ci_lower, row.ci_upper) == cs.hull
    assert "fixed(h=0.5)" in row.note


def _parse_text(text):
    """(panel, label, row name) -> cell, read by column position from the aligned tables."""
    out, panel, cols = {}, None, None
    for line in text.splitlines():
        if line in ("Sharp RD", "First stage", "Reduced form", "Fuzzy RD"):
            panel, cols = line, None
            continue
        if panel is None or not line.strip() or line.startswith("  ("):
            continue
        if cols is None:
            # cells are right-aligned under headers like "(2) bias_aware"
            heads = list(re.finditer(r"\((\w+)\) \w+", line))
            bounds = [h.end() for h in heads]
            starts = [0] + bounds[:-1]
            cols = [(h.group(1), a, b) for h, a, b in zip(heads, starts, bounds)]
            continue
        name = re.match(r"^(Estimate|SE|\S+% CI|CI|Bandwidth|Eff\. obs|Rescaled M)", line)
        if name:
            for lab, a, b in cols:
                out[(panel, lab, name.group(1))] = line[max(a, name.end()):b].strip()
    return out


PANEL = {"sharp": "Sharp RD", "first_stage": "First stage", "reduced_form": "Reduced form", "fuzzy": "Fuzzy RD"}


def test_text_and_csv_round_trip(fuzzy_report, tmp_path):
    text = format_text(fuzzy_report)
    write_report_csv(fuzzy_report, tmp_path / "report.csv")
    cells = _parse_text(text)
    rows = read_report_csv(tmp_path / "report.csv")
    assert len(rows) == len(fuzzy_report.rows)
    checked = 0
    for r, obj in zip(rows, fuzzy_report.rows):
        key = (PANEL[r["panel"]], r["label"])
        assert float(r["estimate"]) == obj.estimate
        assert cells[key + ("Estimate",)] == f"{float(r['estimate']):.3f}"
        assert cells[key + ("SE",)] == f"{float(r['se']):.3f}"
        assert cells[key + ("Bandwidth",)] == f"{float(r['bandwidth']):.3f}"
        assert cells[key + ("Eff. obs",)] == f"{int(r['eff_obs']):,}"
        lo, hi = float(r["ci_lower"]), float(r["ci_upper"])
        assert cells[key + ("95% CI",)] == fmt_ci(lo, hi)
        expected_m = f"{float(r['rescaled_M']):.3f}" if r["rescaled_M"] else ""
        assert cells[key + ("Rescaled M",)] == expected_m
        checked += 1
    assert checked == 9


def test_sharp_noiseless_fixture():
    x = np.linspace(-2, 2, 81)
    s = RdSample.sharp(x, 1 + x + 2 * (x >= 0))
    specs = [
        SpecConfig("a", "ols", 1.0),
        SpecConfig("b", "bias_aware", 1.5, M_y=MSource("fixed", 0.2)),
        SpecConfig("c", "bias_aware", "auto", M_y=MSource("rot_iw", 2.0)),
    ]
    rep = run_analysis(AnalysisConfig(design="sharp", specs=specs), s)
    assert rep.ok
    for r in rep.rows:
        assert r.estimate == pytest.approx(2.0, abs=1e-10)
        assert r.se == 0.0
        assert "degenerate variance" in r.note
    assert "note: degenerate variance" in format_text(rep)


def test_failing_spec_does_not_abort():
    x = np.linspace(-2, 2, 41)
    s = RdSample.sharp(x, x + (x >= 0) + np.sin(7 * x))
    specs = [SpecConfig("tiny", "ols", 0.01), SpecConfig("ok", "ols", 1.0)]
    rep = run_analysis(AnalysisConfig(design="sharp", specs=specs), s)
    assert not rep.ok and len(rep.failures) == 1
    assert rep.rows[0].failed and "IdentificationError" in rep.rows[0].error
    assert not rep.rows[1].failed
    text = format_text(rep)
    assert "FAILED" in text and "1 spec row(s) failed" in text


# ---------------------------------------------------------------- binning


def _one_side(n):
    x = np.arange(1, n + 1, dtype=float)
    return RdSample.sharp(x, x * 10)


def test_bins_exact_division():
    b = binned_plot_data(_one_side(10), BinRule.count_per_bin(5))
    assert list(b.n) == [5, 5]
    assert list(b.x) == [3.0, 8.0]
    assert list(b.mean) == [30.0, 80.0]


def test_bins_remainder_kept():
    b = binned_plot_data(_one_side(7), BinRule.count_per_bin(5))
    assert list(b.n) == [5, 2]
    assert list(b.x) == [3.0, 6.5]


def test_bins_never_straddle_cutoff():
    x = np.array([-3.0, -2.0, -1.0, 0.0, 1.0, 2.0])
    b = binned_plot_data(RdSample.sharp(x, x), BinRule.count_per_bin(4))
    assert list(b.side) == ["left", "right"]
    assert list(b.n) == [3, 3]


def test_bins_left_fill_outward_from_cutoff():
    x = -np.arange(1, 8, dtype=float)
    b = binned_plot_data(RdSample.sharp(x, x), BinRule.count_per_bin(5))
    # the full bin sits next to the cutoff, the remainder at the outer end
    assert list(b.n) == [2, 5]
    assert list(b.x) == [-6.5, -3.0]


def test_bins_per_support_point_months():
    rng = np.random.default_rng(0)
    x = rng.integers(-6, 6, 500).astype(float)
    b = binned_plot_data(RdSample.sharp(x, rng.normal(size=500)), BinRule.per_support_point())
    assert list(b.x) == sorted(set(x))
    assert b.n.sum() == 500


def test_bins_original_units_and_csv(tmp_path):
    x = np.array([-1.0, -0.5, 0.0, 0.5])
    s = RdSample.sharp(x, x, cutoff_original=10.0)
    b = binned_plot_data(s, BinRule.per_support_point())
    assert list(b.x) == [9.0, 9.5, 10.0, 10.5]
    write_bins_csv(b, tmp_path / "bins.csv")
    lines = (tmp_path / "bins.csv").read_text().splitlines()
    assert lines[0] == "side,x,mean,n" and len(lines) == 5


def test_bin_rule_validation():
    with pytest.raises(InvalidParameter):
        BinRule.count_per_bin(0)
