"""Specification battery and table-style reports.

Each spec yields one row per panel: ``sharp`` for sharp designs, and
``first_stage``, ``reduced_form`` and ``fuzzy`` for fuzzy designs.
Bandwidths are in the units of the running variable; rescaled curvature
bounds refer to the running variable mapped onto ``[-1, 1]``.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import asdict, dataclass, field

from scipy.special import ndtri

from .biasaware import bias_aware_ci, naive_ci, optimize_bandwidth
from .config import AnalysisConfig, MSource, SpecConfig
from .data import RdSample, rescale_factor
from .errors import DegenerateVarianceWarning, RdError
from .fuzzy import ar_confidence_set, fuzzy_estimate
from .localpoly import fit
from .smoothness import rot_ak, rot_iw

SHARP_PANELS = ("sharp",)
FUZZY_PANELS = ("first_stage", "reduced_form", "fuzzy")
CSV_FIELDS = (
    "spec", "label", "panel", "method", "estimate", "se", "ci_lower", "ci_upper",
    "bandwidth", "eff_obs", "rescaled_M", "note", "error",
)


@dataclass
class ReportRow:
    spec: int
    label: str
    panel: str
    method: str
    estimate: float = math.nan
    se: float = math.nan
    ci_lower: float = math.nan
    ci_upper: float = math.nan
    bandwidth: float = math.nan
    eff_obs: int | None = None
    rescaled_M: float | None = None
    note: str = ""
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)


@dataclass
class AnalysisReport:
    rows: list
    design: str
    alpha_labels: dict
    n: int
    n_trimmed: int
    n_rejected: int
    cutoff: float
    doughnut_s: float
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def panel(self, name: str) -> list:
        return [r for r in self.rows if r.panel == name]


def resolve_M(source: MSource, sample: RdSample, outcome: str) -> float:
    if source.kind == "fixed":
        return source.value
    if source.kind == "rot_ak":
        return rot_ak(sample, outcome).M
    return rot_iw(sample, outcome, factor=source.value).M


def _bandwidth(spec: SpecConfig, sample, M, outcome):
    if spec.h == "auto":
        return optimize_bandwidth(sample, M, spec.alpha, spec.criterion, outcome)
    return float(spec.h)


def _linear_row(row: ReportRow, sample, spec, outcome, source, scale):
    M = resolve_M(source, sample, outcome) if spec.method == "bias_aware" else 0.0
    h = _bandwidth(spec, sample, M, outcome)
    est = fit(sample, outcome, h, spec.q)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateVarianceWarning)
        ci = bias_aware_ci(est, M, spec.alpha) if spec.method == "bias_aware" else naive_ci(est, spec.alpha)
    row.estimate, row.se = est.estimate, est.se_ehw
    row.ci_lower, row.ci_upper = ci.lower, ci.upper
    row.bandwidth, row.eff_obs = h, est.n_eff
    if spec.method == "bias_aware":
        row.rescaled_M = M * scale
    if ci.degenerate:
        row.note = "degenerate variance (SE = 0)"
    return h, M


def _fuzzy_row(row: ReportRow, sample, spec, h_y, My, Mt, scale):
    fe = fuzzy_estimate(sample, h_y, spec.q)
    row.estimate, row.se = fe.ratio, fe.se_delta
    row.bandwidth, row.eff_obs = h_y, fe.n_eff
    if spec.method == "ols":
        z = float(ndtri(1 - spec.alpha / 2))
        row.ci_lower, row.ci_upper = fe.ratio - z * fe.se_delta, fe.ratio + z * fe.se_delta
        return
    policy = "reoptimize" if spec.ar_policy == "reoptimize" else h_y
    cs = ar_confidence_set(sample, My, Mt, spec.alpha, h_policy=policy)
    row.ci_lower, row.ci_upper = cs.hull
    row.rescaled_M = My * scale
    notes = [f"AR set {cs.describe()} ({cs.h_policy})"]
    if cs.unbounded_flag != "none":
        notes.append(f"unbounded: {cs.unbounded_flag}")
    if len(cs.intervals) > 1:
        notes.append("disjoint; CI columns show the hull")
    row.note = "; ".join(notes)


def _run_spec(idx: int, spec: SpecConfig, sample: RdSample, design: str, scale: float) -> list:
    label = spec.label
    if design == "sharp":
        row = ReportRow(idx, label, "sharp", spec.method)
        try:
            _linear_row(row, sample, spec, "y", spec.M_y, scale)
        except RdError as exc:
            row.error = f"{type(exc).__name__}: {exc}"
        return [row]

    fs = ReportRow(idx, label, "first_stage", spec.method)
    rf = ReportRow(idx, label, "reduced_form", spec.method)
    fz = ReportRow(idx, label, "fuzzy", spec.method)
    out = [fs, rf, fz]
    stage = {}
    for row, outcome, source in ((fs, "t", spec.M_t), (rf, "y", spec.M_y)):
        try:
            stage[outcome] = _linear_row(row, sample, spec, outcome, source, scale)
        except RdError as exc:
            row.error = f"{type(exc).__name__}: {exc}"
    if "y" not in stage or "t" not in stage:
        fz.error = "first stage or reduced form failed"
        return out
    (h_y, My), (_, Mt) = stage["y"], stage["t"]
    try:
        _fuzzy_row(fz, sample, spec, h_y, My, Mt, scale)
    except RdError as exc:
        fz.error = f"{type(exc).__name__}: {exc}"
    return out


def run_analysis(config: AnalysisConfig, sample: RdSample) -> AnalysisReport:
    """Run every spec; failures are recorded per row and never abort the run."""
    config.validate()
    scale = rescale_factor(sample).scale
    rows = []
    for i, spec in enumerate(config.specs, start=1):
        rows.extend(_run_spec(i, spec, sample, config.design, scale))
    failures = [f"spec {r.label} [{r.panel}]: {r.error}" for r in rows if r.failed]
    return AnalysisReport(
        rows=rows,
        design=config.design,
        alpha_labels={s.label: s.alpha for s in config.specs},
        n=sample.n,
        n_trimmed=sample.n_trimmed,
        n_rejected=len(sample.rejected),
        cutoff=sample.cutoff_original,
        doughnut_s=config.doughnut_s,
        failures=failures,
    )


# ------------------------------------------------------------- formatting


def fmt_num(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.3f}"


def fmt_count(n) -> str:
    return "" if n is None else f"{n:,}"


def fmt_ci(lo, hi) -> str:
    if math.isnan(lo) or math.isnan(hi):
        return ""
    return f"({fmt_num(lo)}, {fmt_num(hi)})"


def _cells(r: ReportRow) -> dict:
    if r.failed:
        return {"Estimate": "FAILED"}
    return {
        "Estimate": fmt_num(r.estimate),
        "SE": fmt_num(r.se),
        "CI": fmt_ci(r.ci_lower, r.ci_upper),
        "Bandwidth": fmt_num(r.bandwidth),
        "Eff. obs": fmt_count(r.eff_obs),
        "Rescaled M": fmt_num(r.rescaled_M),
    }


PANEL_TITLES = {
    "sharp": "Sharp RD",
    "first_stage": "First stage",
    "reduced_form": "Reduced form",
    "fuzzy": "Fuzzy RD",
}


def format_text(report: AnalysisReport) -> str:
    out = io.StringIO()
    out.write(f"design: {report.design}   cutoff: {report.cutoff:g}   doughnut: {report.doughnut_s:g}\n")
    out.write(
        f"observations: {fmt_count(report.n)}   trimmed: {fmt_count(report.n_trimmed)}"
        f"   rejected rows: {fmt_count(report.n_rejected)}\n"
    )
    panels = SHARP_PANELS if report.design == "sharp" else FUZZY_PANELS
    for p in panels:
        rows = report.panel(p)
        if not rows:
            continue
        out.write(f"\n{PANEL_TITLES[p]}\n")
        headers = [f"({r.label}) {r.method}" for r in rows]
        alphas = {report.alpha_labels[r.label] for r in rows}
        ci_label = f"{100 * (1 - alphas.pop()):g}% CI" if len(alphas) == 1 else "CI"
        names = ["Estimate", "SE", "CI", "Bandwidth", "Eff. obs", "Rescaled M"]
        cells = [_cells(r) for r in rows]
        label_w = max(len(ci_label), len("Rescaled M"))
        widths = [max([len(h)] + [len(c.get(k, "")) for k in names]) for h, c in zip(headers, cells)]
        out.write(" " * label_w + "".join(f"  {h:>{w}}" for h, w in zip(headers, widths)) + "\n")
        for k in names:
            title = ci_label if k == "CI" else k
            out.write(f"{title:<{label_w}}" + "".join(f"  {c.get(k, ''):>{w}}" for c, w in zip(cells, widths)) + "\n")
        for r in rows:
            if r.failed:
                out.write(f"  ({r.label}) error: {r.error}\n")
            elif r.note:
                out.write(f"  ({r.label}) note: {r.note}\n")
    if report.failures:
        out.write(f"\n{len(report.failures)} spec row(s) failed\n")
    return out.getvalue()


def write_report_csv(report: AnalysisReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in report.rows:
            d = asdict(r)
            for k in ("estimate", "se", "ci_lower", "ci_upper", "bandwidth", "rescaled_M"):
                v = d[k]
                d[k] = "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))
            d["eff_obs"] = "" if d["eff_obs"] is None else d["eff_obs"]
            w.writerow(d)


def read_report_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
