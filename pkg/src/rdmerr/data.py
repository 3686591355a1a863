"""Sample container and ingestion-side preprocessing.

All running-variable values stored in an :class:`RdSample` are already
normalized so that the cutoff sits at zero. Treatment assignment is
``x >= 0``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, NamedTuple

import numpy as np

from .errors import DataError, EmptySideWarning, InvalidParameter, InvalidSample


class Observation(NamedTuple):
    y: float
    t: float
    x: float


@dataclass(frozen=True)
class ScaleInfo:
    """Maximum squared running variable, used to report rescaled constants."""

    scale: float


@dataclass(frozen=True, eq=False)
class RdSample:
    """Immutable regression-discontinuity sample.

    Parameters
    ----------
    y, t, x : ndarray
        Outcome, treatment and cutoff-normalized running variable.
    cutoff_original : float
        Cutoff on the raw scale, kept so results can be mapped back.
    design : {"sharp", "fuzzy"}
    doughnut_s : float or None
        Half-width of the removed interval ``[-s, s)``, if any.
    n_trimmed : int
        Rows removed by doughnut trimming.
    t_aggregated : bool
        Set when ``t`` holds cell means rather than 0/1 indicators.
    """

    y: np.ndarray
    t: np.ndarray
    x: np.ndarray
    cutoff_original: float = 0.0
    design: str = "sharp"
    doughnut_s: float | None = None
    n_trimmed: int = 0
    t_aggregated: bool = False
    rejected: tuple = field(default=(), repr=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        x = np.asarray(self.x, dtype=float).ravel()
        t = np.asarray(self.t, dtype=float).ravel()
        if not (y.shape == x.shape == t.shape):
            raise InvalidSample(
                f"column lengths differ: y={y.size}, t={t.size}, x={x.size}"
            )
        for name, arr in (("y", y), ("t", t), ("x", x)):
            bad = np.flatnonzero(~np.isfinite(arr))
            if bad.size:
                raise InvalidSample(f"non-finite {name} at row {int(bad[0])}")
        if self.design not in ("sharp", "fuzzy"):
            raise InvalidSample(f"design must be 'sharp' or 'fuzzy', got {self.design!r}")
        binary = np.all((t == 0.0) | (t == 1.0))
        if self.design == "sharp" and not binary:
            raise InvalidSample("sharp designs need t in {0, 1}")
        if not binary:
            if not self.t_aggregated:
                raise InvalidSample(
                    "non-binary t requires t_aggregated=True (pre-aggregated means)"
                )
            if np.any((t < 0.0) | (t > 1.0)):
                raise InvalidSample("t must lie in [0, 1]")
        if self.doughnut_s is not None and np.any((x >= -self.doughnut_s) & (x < self.doughnut_s)):
            raise InvalidSample("observations remain inside the doughnut interval")
        for name, arr in (("y", y), ("t", t), ("x", x)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_observations(cls, observations: Iterable[Observation], **kwargs) -> "RdSample":
        rows = list(observations)
        if not rows:
            return cls(np.empty(0), np.empty(0), np.empty(0), **kwargs)
        y, t, x = (np.array(col, dtype=float) for col in zip(*rows))
        return cls(y, t, x, **kwargs)

    @classmethod
    def sharp(cls, x, y, cutoff_original: float = 0.0) -> "RdSample":
        """Build a sharp sample from normalized ``x``; ``t`` is ``x >= 0``."""
        x = np.asarray(x, dtype=float)
        return cls(y, (x >= 0).astype(float), x, cutoff_original=cutoff_original)

    def __len__(self):
        return self.x.size

    def __iter__(self):
        for yi, ti, xi in zip(self.y, self.t, self.x):
            yield Observation(float(yi), float(ti), float(xi))

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def z(self) -> np.ndarray:
        return (self.x >= 0).astype(float)

    @cached_property
    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted distinct ``x`` values and their multiplicities."""
        return np.unique(self.x, return_counts=True)

    def outcome(self, which) -> np.ndarray:
        """Resolve an outcome selector: ``"y"``, ``"t"`` or an explicit array."""
        if isinstance(which, str):
            if which == "y":
                return self.y
            if which == "t":
                return self.t
            raise InvalidParameter(f"unknown outcome selector {which!r}")
        v = np.asarray(which, dtype=float)
        if v.shape != self.x.shape:
            raise InvalidParameter("outcome array must align with the sample rows")
        return v

    def shifted_outcome(self, tau0: float) -> np.ndarray:
        """``y - tau0 * t``, the outcome behind the Anderson-Rubin style test."""
        return self.y - tau0 * self.t

    def subset(self, mask) -> "RdSample":
        mask = np.asarray(mask, dtype=bool)
        return replace(self, y=self.y[mask], t=self.t[mask], x=self.x[mask])


def normalize_cutoff(raw_x, c: float) -> np.ndarray:
    """Shift the running variable so the cutoff sits at zero."""
    raw = np.asarray(raw_x, dtype=float)
    bad = np.flatnonzero(~np.isfinite(raw))
    if bad.size:
        raise InvalidParameter(f"non-finite running variable at row {int(bad[0])}")
    if not math.isfinite(c):
        raise InvalidParameter("cutoff must be finite")
    return raw - c


def denormalize(x, c: float) -> np.ndarray:
    return np.asarray(x, dtype=float) + c


def round_down(x_star, granularity: float = 1.0):
    """Round toward minus infinity on a grid of width ``granularity``.

    The implied measurement error ``x_star - result`` lies in
    ``[0, granularity)``. Works elementwise on arrays.
    """
    if not granularity > 0:
        raise InvalidParameter("granularity must be positive")
    a = np.asarray(x_star, dtype=float)
    out = granularity * np.floor(a / granularity)
    # a/g can round across an integer; restore out <= a < out + g
    out = np.where(out > a, out - granularity, out)
    out = np.where(out + granularity <= a, out + granularity, out)
    return float(out) if np.ndim(out) == 0 else out


def doughnut_trim(sample: RdSample, s: float) -> RdSample:
    """Drop observations with ``x`` in the half-open interval ``[-s, s)``.

    The number of rows removed is recorded in ``n_trimmed``. An
    :class:`EmptySideWarning` is issued when a side loses all its data.
    """
    if not s >= 0:
        raise InvalidParameter("doughnut half-width must be non-negative")
    if s == 0:
        return sample
    x = sample.x
    keep = ~((x >= -s) & (x < s))
    out = replace(
        sample.subset(keep),
        doughnut_s=max(s, sample.doughnut_s or 0.0),
        n_trimmed=sample.n_trimmed + int((~keep).sum()),
    )
    for side, mask in (("left", out.x < 0), ("right", out.x >= 0)):
        if not mask.any():
            warnings.warn(f"no {side}-side data after doughnut trim", EmptySideWarning, stacklevel=2)
    return out


def support_count(sample: RdSample, side: str, h: float) -> int:
    """Distinct ``x`` values in ``[-h, 0)`` (left) or ``[0, h]`` (right)."""
    if not h > 0:
        raise InvalidParameter("bandwidth must be positive")
    values, _ = sample.support
    if side == "left":
        sel = (values >= -h) & (values < 0)
    elif side == "right":
        sel = (values >= 0) & (values <= h)
    else:
        raise InvalidParameter(f"side must be 'left' or 'right', got {side!r}")
    return int(sel.sum())


def rescale_factor(sample: RdSample) -> ScaleInfo:
    if sample.n == 0:
        raise InvalidSample("empty sample")
    scale = float(np.max(sample.x ** 2))
    if scale == 0:
        raise InvalidSample("all running-variable values are zero")
    return ScaleInfo(scale)


def read_csv(
    path,
    cutoff: float = 0.0,
    design: str = "sharp",
    doughnut: float = 0.0,
    t_aggregated: bool = False,
) -> RdSample:
    """Load a sample from a CSV file with columns ``y``, ``x`` and optional ``t``.

    Rows with missing or non-numeric fields are rejected; the rejects are
    kept on the returned sample as ``(row_number, reason)`` pairs. When every
    row is rejected a :class:`DataError` is raised. For sharp designs a
    missing ``t`` column is derived as ``x >= cutoff``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        reader.fieldnames = header
        for col in ("y", "x"):
            if col not in header:
                raise DataError(f"{path}: missing required column {col!r}")
        has_t = "t" in header
        if not has_t and design != "sharp":
            raise DataError(f"{path}: fuzzy designs need a 't' column")
        ys, ts, xs, rejected = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            try:
                y = _parse_float(row.get("y"), "y")
                x = _parse_float(row.get("x"), "x")
                t = _parse_float(row.get("t"), "t") if has_t else float(x >= cutoff)
            except ValueError as exc:
                rejected.append((lineno, str(exc)))
                continue
            ys.append(y)
            ts.append(t)
            xs.append(x)
    if not xs:
        raise DataError(f"{path}: no usable rows", rejected)
    sample = RdSample(
        np.array(ys),
        np.array(ts),
        normalize_cutoff(xs, cutoff),
        cutoff_original=cutoff,
        design=design,
        t_aggregated=t_aggregated,
        rejected=tuple(rejected),
    )
    return doughnut_trim(sample, doughnut)


def _parse_float(raw, name):
    if raw is None or raw.strip() == "":
        raise ValueError(f"missing {name}")
    try:
        val = float(raw)
    except ValueError:
        raise ValueError(f"non-numeric {name}: {raw!r}") from None
    if not math.isfinite(val):
        raise ValueError(f"non-finite {name}: {raw!r}")
    return val


def write_csv(sample: RdSample, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["y", "t", "x"])
        for obs in sample:
            w.writerow([repr(obs.y), repr(obs.t), repr(obs.x + sample.cutoff_original)])
