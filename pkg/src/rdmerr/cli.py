"""Command-line entry point: ``rdmerr analyze | plot | simulate | visualize-m``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .config import AnalysisConfig, MSource, SpecConfig, load_analysis_config, load_simulation_config
from .data import read_csv
from .errors import RdError
from .plotting import BinRule, binned_plot_data, bins_svg, spline_svg, write_bins_csv
from .report import format_text, run_analysis, write_report_csv
from .simulation import REP_FIELDS, coverage_experiment, smoothing_check, true_tau, true_tau_fuzzy
from .smoothness import extremal_spline_fit


def _common(p: argparse.ArgumentParser, data=True):
    if data:
        p.add_argument("csv", nargs="?", help="input CSV with columns y, x and optional t")
        p.add_argument("--cutoff", type=float, help="assignment threshold in x units")
        p.add_argument("--design", choices=("sharp", "fuzzy"))
        p.add_argument("--doughnut", type=float, help="drop observations with -s <= x < s")
    p.add_argument("--config", help="key-value configuration file")
    p.add_argument("--out-dir", help="directory for output files")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rdmerr", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="run the specification battery; writes report.txt and report.csv")
    _common(p)
    p.add_argument("--alpha", type=float, help="override alpha for every spec")

    p = sub.add_parser("plot", help="binned scatter data; writes bins.csv")
    _common(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--bin-size", type=int, default=None, help="observations per bin (default: one bin per x value)")
    g.add_argument("--per-support", action="store_true", help="one point per distinct x value")
    p.add_argument("--outcome", choices=("y", "t"), default="y")
    p.add_argument("--svg", action="store_true", help="also write bins.svg (needs matplotlib)")

    p = sub.add_parser("visualize-m", help="extremal quadratic spline under |g''| <= M; writes spline.csv")
    _common(p)
    p.add_argument("--M", type=float, required=True, help="curvature bound in x units")
    p.add_argument("--outcome", choices=("y", "t"), default="y")
    p.add_argument("--knots", type=int, default=21, help="interior knots per side")
    p.add_argument("--sign", choices=("+", "-", "best"), default="best")
    p.add_argument("--pin", choices=("both", "left", "right", "none"), default="both")
    p.add_argument("--placement", choices=("equal", "quantile"), default="equal")
    p.add_argument("--svg", action="store_true")

    p = sub.add_parser("simulate", help="coverage, estimand or smoothing experiments; writes coverage.csv")
    _common(p, data=False)
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--reps", type=int, help="override the configured replication count")
    p.add_argument("--workers", type=int, help="worker processes")
    return ap


def _analysis_config(args) -> AnalysisConfig:
    if args.config:
        cfg = load_analysis_config(args.config)
    else:
        cfg = AnalysisConfig(specs=[SpecConfig("1", "bias_aware", "auto", M_y=MSource("rot_ak"), M_t=MSource("rot_ak"))])
    if args.csv:
        cfg.csv = args.csv
    if args.cutoff is not None:
        cfg.cutoff = args.cutoff
    if args.design:
        cfg.design = args.design
    if args.doughnut is not None:
        cfg.doughnut_s = args.doughnut
    if args.out_dir:
        cfg.out_dir = args.out_dir
    if getattr(args, "alpha", None) is not None:
        for s in cfg.specs:
            s.alpha = args.alpha
    if not cfg.csv:
        raise RdError("no input CSV given (positional argument or [data] csv)")
    return cfg


def _load(cfg: AnalysisConfig):
    sample = read_csv(cfg.csv, cfg.cutoff, cfg.design, cfg.doughnut_s, cfg.t_aggregated)
    for line, reason in sample.rejected:
        print(f"warning: row {line} rejected ({reason})", file=sys.stderr)
    return sample


def _out(cfg_dir) -> Path:
    d = Path(cfg_dir or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_analyze(args) -> int:
    cfg = _analysis_config(args)
    sample = _load(cfg)
    report = run_analysis(cfg, sample)
    out = _out(cfg.out_dir)
    text = format_text(report)
    (out / "report.txt").write_text(text, encoding="utf-8")
    write_report_csv(report, out / "report.csv")
    print(text, end="")
    if report.failures:
        for f in report.failures:
            print(f"error: {f}", file=sys.stderr)
        return 1
    return 0


def cmd_plot(args) -> int:
    cfg = _analysis_config(args)
    sample = _load(cfg)
    rule = BinRule.count_per_bin(args.bin_size) if args.bin_size else BinRule.per_support_point()
    bins = binned_plot_data(sample, rule, args.outcome)
    out = _out(cfg.out_dir)
    write_bins_csv(bins, out / "bins.csv")
    if args.svg:
        bins_svg(bins, out / "bins.svg", cfg.cutoff, args.outcome)
    print(f"wrote {len(bins)} bins to {out / 'bins.csv'}")
    return 0


def cmd_visualize_m(args) -> int:
    cfg = _analysis_config(args)
    sample = _load(cfg)
    pin = {"both": ("left", "right"), "left": ("left",), "right": ("right",), "none": ()}[args.pin]
    fitm = extremal_spline_fit(sample, args.outcome, args.M, args.knots, args.sign, pin, args.placement)
    out = _out(cfg.out_dir)
    lo, hi = float(sample.x.min()), float(sample.x.max())
    fitm.to_csv(out / "spline.csv", lo, hi, offset=cfg.cutoff)
    summary = [
        f"M: {fitm.M:g}",
        f"pinned sides: {', '.join(pin) or 'none'} (sign {args.sign}: left {fitm.left.sign}, right {fitm.right.sign})",
        f"constrained SSR: {fitm.ssr:.6g}",
        f"unconstrained SSR: {fitm.unconstrained_ssr:.6g}",
        f"KKT residual: {fitm.kkt_residual:.3g}",
    ]
    (out / "spline_summary.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")
    if args.svg:
        bins = binned_plot_data(sample, BinRule.per_support_point(), args.outcome)
        spline_svg(fitm, bins, out / "spline.svg", lo, hi, cfg.cutoff)
    print("\n".join(summary))
    return 0


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def cmd_simulate(args) -> int:
    if not args.config:
        raise RdError("simulate needs --config")
    cfg = load_simulation_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.reps is not None:
        cfg.reps = args.reps
    if args.workers is not None:
        cfg.workers = args.workers
    out = _out(args.out_dir)
    lines = [f"task: {cfg.task}"]

    if cfg.task == "smoothing_check":
        sm = cfg.smoothing
        res = smoothing_check(sm["h"], sm["error"], sm["grid_step"], sm["x_range"])
        lines += [f"grid_step: {_fmt(sm['grid_step'])}", f"second_derivative_bound: {_fmt(res.bound)}"]
        with open(out / "smoothing.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "g", "second_difference"])
            for x, g, d in zip(res.x, res.g, res.second_diff):
                w.writerow([repr(float(x)), repr(float(g)), repr(float(d))])
    else:
        truth = true_tau(cfg.dgp) if cfg.dgp.sharp else true_tau_fuzzy(cfg.dgp)
        lines += [
            f"design: {'sharp' if cfg.dgp.sharp else 'fuzzy'}",
            f"true_tau: {_fmt(truth.tau)}",
            f"tau_star: {_fmt(truth.tau_star)}",
            f"estimand_method: {truth.method}",
        ]
        if truth.method == "monte_carlo":
            lines.append(f"estimand_mc_se: {_fmt(truth.se)}")
        if truth.bayes_normalized:
            lines.append("note: error weights obtained by numerical Bayes normalization")
        if truth.ratio_of_averages is not None:
            lines.append(f"ratio_of_averages: {_fmt(truth.ratio_of_averages)}")
        if cfg.task == "coverage":
            res = coverage_experiment(cfg.dgp, cfg.method, cfg.reps, cfg.seed, cfg.n, cfg.workers)
            with open(out / "coverage.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(REP_FIELDS)
                for r in res.rows:
                    w.writerow([_fmt(r[k]) for k in REP_FIELDS])
            lines += [f"seed: {cfg.seed}", f"n: {cfg.n}", f"method: {cfg.method.method}"]
            lines += [f"{k}: {_fmt(v)}" for k, v in res.summary().items()]
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


COMMANDS = {
    "analyze": cmd_analyze,
    "plot": cmd_plot,
    "visualize-m": cmd_visualize_m,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except RdError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
