"""Forecast accuracy and interval miscoverage over observed cells."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np
from numpy.typing import ArrayLike

from .errors import AlignmentError, EmptyTestSet
from .lsq import ForecastFrame

METRIC_HEADER = ("scope", "ahead", "mae", "lmr", "umr", "m")


@dataclass(frozen=True)
class AheadMetrics:
    ahead: float
    mae: float
    lmr: float | None
    umr: float | None
    m: int


@dataclass(frozen=True)
class MetricReport:
    mae: float
    lmr: float | None
    umr: float | None
    m: int
    per_ahead: tuple[AheadMetrics, ...] = ()


def _arr(obj) -> np.ndarray | None:
    if obj is None:
        return None
    if isinstance(obj, ForecastFrame):
        return obj.values
    return np.asarray(obj, dtype=np.float64)


def _summarize(Y, med, lo, hi, keep) -> tuple[float, float | None, float | None, int]:
    M = int(keep.sum())
    mae = float(np.abs(Y[keep] - med[keep]).sum() / M)
    # strict inequalities: a truth on the bound counts as covered
    lmr = None if lo is None else float(np.sum(Y[keep] < lo[keep]) / M)
    umr = None if hi is None else float(np.sum(Y[keep] > hi[keep]) / M)
    return mae, lmr, umr, M


def compute_metrics(
    truth: ArrayLike | ForecastFrame,
    median: ArrayLike | ForecastFrame,
    lower: ArrayLike | ForecastFrame | None = None,
    upper: ArrayLike | ForecastFrame | None = None,
    mask: ArrayLike | None = None,
    aheads: Sequence[float] | None = None,
) -> MetricReport:
    """MAE of the median fit plus lower/upper miscoverage rates.

    Only cells with a non-zero ``mask`` count. When ``aheads`` is given
    (or the median is a ``ForecastFrame``), a per-ahead breakdown is added.
    """
    frames = [f for f in (truth, median, lower, upper) if isinstance(f, ForecastFrame)]
    for f in frames[1:]:
        if f.row_index != frames[0].row_index or f.aheads != frames[0].aheads:
            raise AlignmentError("frames are not aligned on (location, time, ahead)")
    Y, med, lo, hi = _arr(truth), _arr(median), _arr(lower), _arr(upper)
    if Y.ndim == 1:
        Y, med = Y[:, None], med[:, None]
        lo = None if lo is None else lo.reshape(-1, 1)
        hi = None if hi is None else hi.reshape(-1, 1)
    keep = np.ones(Y.shape, dtype=bool) if mask is None else np.asarray(mask).reshape(Y.shape) != 0
    for a in (med, lo, hi):
        if a is not None and a.shape != Y.shape:
            raise AlignmentError(f"shape {a.shape} does not match truth {Y.shape}")
    if keep.sum() == 0:
        raise EmptyTestSet("no observed cells to evaluate")
    mae, lmr, umr, M = _summarize(Y, med, lo, hi, keep)

    if aheads is None and frames:
        aheads = frames[0].aheads
    per = ()
    if aheads is not None:
        per = per_ahead_metrics(Y, med, lo, hi, keep, aheads)
    return MetricReport(mae, lmr, umr, M, per)


def per_ahead_metrics(truth, median, lower, upper, mask, aheads) -> tuple[AheadMetrics, ...]:
    """Metrics restricted to each ahead column; aheads with no cells are omitted."""
    Y, med, lo, hi = _arr(truth), _arr(median), _arr(lower), _arr(upper)
    keep = np.asarray(mask) != 0
    if len(aheads) != Y.shape[1]:
        raise AlignmentError("number of aheads does not match the truth columns")
    rows = []
    for j, a in enumerate(aheads):
        col = keep[:, j]
        if not col.any():
            continue
        sl = (slice(None), slice(j, j + 1))
        mae, lmr, umr, M = _summarize(
            Y[sl], med[sl], None if lo is None else lo[sl], None if hi is None else hi[sl], keep[sl]
        )
        rows.append(AheadMetrics(a, mae, lmr, umr, M))
    return tuple(rows)


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def write_metrics(fh: IO[str], report: MetricReport) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(METRIC_HEADER)
    w.writerow(["overall", "", _fmt(report.mae), _fmt(report.lmr), _fmt(report.umr), report.m])
    for r in report.per_ahead:
        ahead = int(r.ahead) if float(r.ahead).is_integer() else r.ahead
        w.writerow(["ahead", ahead, _fmt(r.mae), _fmt(r.lmr), _fmt(r.umr), r.m])
