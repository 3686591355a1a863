"""Binned scatter data and optional static SVG output."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import RdSample
from .errors import InvalidParameter


@dataclass(frozen=True)
class BinRule:
    """``count_per_bin(k)`` or ``per_support_point``."""

    kind: str
    k: int = 0

    @classmethod
    def count_per_bin(cls, k: int) -> "BinRule":
        if k < 1:
            raise InvalidParameter("bin size k must be at least 1")
        return cls("count", int(k))

    @classmethod
    def per_support_point(cls) -> "BinRule":
        return cls("support")


@dataclass(frozen=True)
class Bins:
    side: np.ndarray
    x: np.ndarray
    mean: np.ndarray
    n: np.ndarray

    def __len__(self):
        return self.x.size


def _side_bins(x, v, rule: BinRule):
    order = np.argsort(x, kind="stable")
    x, v = x[order], v[order]
    if rule.kind == "support":
        ux, start, counts = np.unique(x, return_index=True, return_counts=True)
    else:
        start = np.arange(0, x.size, rule.k)
        counts = np.diff(np.append(start, x.size))
    sx = np.add.reduceat(x, start) if x.size else np.zeros(0)
    sv = np.add.reduceat(v, start) if x.size else np.zeros(0)
    return sx / counts, sv / counts, counts


def binned_plot_data(sample: RdSample, rule: BinRule, outcome="y") -> Bins:
    """Bin means per side; bins never straddle the cutoff.

    The count rule groups consecutive observations sorted by ``x`` into
    bins of ``k``, keeping a short remainder bin at the outer end. Bin
    centers are the mean ``x`` within each bin, in original units.
    """
    v = sample.outcome(outcome)
    parts = []
    for name, mask in (("left", sample.x < 0), ("right", sample.x >= 0)):
        xs, xv = sample.x[mask], v[mask]
        if name == "left":
            # bins fill outward from the cutoff
            cx, cv, cn = _side_bins(-xs, xv, rule)
            cx = -cx
            cx, cv, cn = cx[::-1], cv[::-1], cn[::-1]
        else:
            cx, cv, cn = _side_bins(xs, xv, rule)
        parts.append((np.full(cx.size, name), cx, cv, cn))
    side, cx, cv, cn = (np.concatenate(z) for z in zip(*parts))
    return Bins(side, cx + sample.cutoff_original, cv, cn.astype(int))


def write_bins_csv(bins: Bins, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["side", "x", "mean", "n"])
        for s, x, m, n in zip(bins.side, bins.x, bins.mean, bins.n):
            w.writerow([s, repr(float(x)), repr(float(m)), int(n)])


def _pyplot():
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise InvalidParameter("SVG output needs matplotlib (pip install rdmerr[plot])") from None
    return plt


def bins_svg(bins: Bins, path, cutoff: float = 0.0, ylabel: str = "y") -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, color in (("left", "tab:blue"), ("right", "tab:red")):
        m = bins.side == name
        ax.scatter(bins.x[m], bins.mean[m], s=12, color=color)
    ax.axvline(cutoff, color="grey", lw=0.8, ls="--")
    ax.set_xlabel("x")
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def spline_svg(fit, bins: Bins, path, lo: float, hi: float, cutoff: float = 0.0) -> None:
    plt = _pyplot()
    x, g, _ = fit.grid(lo, hi)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(bins.x, bins.mean, s=10, color="black")
    for m in (x < 0, x >= 0):
        ax.plot(x[m] + cutoff, g[m], color="tab:red")
    ax.axvline(cutoff, color="grey", lw=0.8, ls="--")
    ax.set_title(f"quadratic spline, |g''| <= {fit.M:g}")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
