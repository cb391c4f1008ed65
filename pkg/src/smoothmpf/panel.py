"""Long-format panel data and construction of lag/ahead design matrices.

Panel CSV schema (header must match exactly, ``issue`` is optional)::

    geo_id,time_value,signal,value,issue

``time_value`` and ``issue`` are ISO-8601 dates or non-negative integers; all
times are held internally as integer day indices (days since 1970-01-01 for
dates). A record with no issue is treated as published on its own
``time_value``.

The reserved predictor name ``__intercept__`` adds a constant column of ones.
No intercept is added otherwise.
"""

from __future__ import annotations

import csv
import datetime as _dt
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import DuplicateRecord, EmptyDesign, ParseError, UnknownVariable

INTERCEPT = "__intercept__"
HEADER = ("geo_id", "time_value", "signal", "value", "issue")
_EPOCH = _dt.date(1970, 1, 1).toordinal()


def parse_time(text: str | int) -> int:
    """Parse an ISO date or a non-negative integer into a day index."""
    if isinstance(text, (int, np.integer)):
        if text < 0:
            raise ValueError(f"negative time {text}")
        return int(text)
    s = str(text).strip()
    if s.isdigit():
        return int(s)
    try:
        return _dt.date.fromisoformat(s).toordinal() - _EPOCH
    except ValueError:
        raise ValueError(f"not an ISO date or non-negative integer: {text!r}") from None


def format_time(t: int, as_date: bool) -> str:
    if as_date:
        return _dt.date.fromordinal(int(t) + _EPOCH).isoformat()
    return str(int(t))


def _is_date(text: str) -> bool:
    return not text.strip().isdigit()


class Record(NamedTuple):
    geo_id: str
    time: int
    signal: str
    value: float
    issue: int | None = None


@dataclass(frozen=True)
class PanelDataset:
    records: tuple[Record, ...] = ()
    dates: bool = False

    def __post_init__(self):
        seen = set()
        for r in self.records:
            key = (r.geo_id, r.time, r.signal, r.issue)
            if key in seen:
                raise DuplicateRecord(f"duplicate record {key}")
            seen.add(key)
            if not math.isfinite(r.value):
                raise ValueError(f"non-finite value in record {r}")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def signals(self) -> set[str]:
        return {r.signal for r in self.records}

    @property
    def locations(self) -> list[str]:
        return sorted({r.geo_id for r in self.records})

    @property
    def times(self) -> list[int]:
        return sorted({r.time for r in self.records})

    def snapshot(self, as_of: int | None = None) -> dict[tuple[str, str, int], float]:
        """Resolve revisions: ``(geo_id, signal, time) -> value`` as of a date.

        The record with the latest issue not after ``as_of`` wins. Records
        without an issue count as issued on their own time.
        """
        best: dict[tuple[str, str, int], tuple[int, float]] = {}
        for r in self.records:
            issued = r.time if r.issue is None else r.issue
            if as_of is not None and issued > as_of:
                continue
            key = (r.geo_id, r.signal, r.time)
            prev = best.get(key)
            if prev is None or issued > prev[0]:
                best[key] = (issued, r.value)
        return {k: v for k, (_, v) in best.items()}


def load_panel(path: str | Path) -> PanelDataset:
    """Read a panel CSV. Row numbers in errors count the header as row 1."""
    records: list[Record] = []
    kinds: set[bool] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("missing header", row=1) from None
        if tuple(header) not in (HEADER, HEADER[:4]):
            raise ParseError(f"header must be {','.join(HEADER)} (issue optional), got {header}", row=1)
        has_issue = len(header) == 5
        seen: set[tuple] = set()
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", row=rownum)
            geo, time_s, signal, value_s = row[:4]
            issue_s = row[4] if has_issue else ""
            try:
                value = float(value_s)
            except ValueError:
                raise ParseError(f"bad value {value_s!r}", row=rownum) from None
            if not math.isfinite(value):
                raise ParseError(f"non-finite value {value_s!r}", row=rownum)
            try:
                time = parse_time(time_s)
                issue = parse_time(issue_s) if issue_s.strip() else None
            except ValueError as exc:
                raise ParseError(str(exc), row=rownum) from None
            kinds.add(_is_date(time_s))
            if issue_s.strip():
                kinds.add(_is_date(issue_s))
            if len(kinds) > 1:
                raise ParseError("mixes ISO dates and integer times", row=rownum)
            key = (geo, time, signal, issue)
            if key in seen:
                raise DuplicateRecord(f"row {rownum}: duplicate record {key}")
            seen.add(key)
            records.append(Record(geo, time, signal, value, issue))
    return PanelDataset(tuple(records), dates=kinds == {True})


def write_panel(path: str | Path, panel: PanelDataset) -> None:
    with_issue = any(r.issue is not None for r in panel.records)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER if with_issue else HEADER[:4])
        for r in panel.records:
            row = [r.geo_id, format_time(r.time, panel.dates), r.signal, repr(float(r.value))]
            if with_issue:
                row.append("" if r.issue is None else format_time(r.issue, panel.dates))
            w.writerow(row)


@dataclass(frozen=True)
class Predictor:
    variable: str
    lags: tuple[int, ...]


@dataclass(frozen=True)
class TaskSpec:
    """What to forecast, from which lagged predictors, and for which aheads."""

    response: str
    predictors: tuple[Predictor, ...]
    aheads: tuple[int, ...]
    forecast_times: tuple[int, ...] | None = None
    as_of: int | None = None

    def __post_init__(self):
        preds = []
        for p in self.predictors:
            if not isinstance(p, Predictor):
                var, lags = p
                p = Predictor(var, tuple(lags))
            lags = (0,) if p.variable == INTERCEPT else tuple(int(x) for x in p.lags)
            if not lags:
                raise ValueError(f"predictor {p.variable!r} has no lags")
            if len(set(lags)) != len(lags):
                raise ValueError(f"duplicate lags for predictor {p.variable!r}")
            if min(lags) < 0:
                raise ValueError(f"negative lag for predictor {p.variable!r}")
            preds.append(Predictor(p.variable, tuple(sorted(lags))))
        if not preds:
            raise ValueError("at least one predictor is required")
        object.__setattr__(self, "predictors", tuple(preds))
        aheads = tuple(int(a) for a in self.aheads)
        if not aheads:
            raise ValueError("at least one ahead is required")
        if min(aheads) < 0 or any(b <= a for a, b in zip(aheads, aheads[1:])):
            raise ValueError("aheads must be non-negative and strictly increasing")
        object.__setattr__(self, "aheads", aheads)
        if self.forecast_times is not None:
            object.__setattr__(self, "forecast_times", tuple(sorted(int(t) for t in self.forecast_times)))

    @property
    def column_index(self) -> list[tuple[str, int]]:
        return [(p.variable, lag) for p in self.predictors for lag in p.lags]

    @property
    def m(self) -> int:
        return sum(len(p.lags) for p in self.predictors)

    @property
    def q(self) -> int:
        return len(self.aheads)

    def to_dict(self, dates: bool = False) -> dict:
        d: dict = {
            "response": self.response,
            "predictors": [{"variable": p.variable, "lags": list(p.lags)} for p in self.predictors],
            "aheads": list(self.aheads),
        }
        if self.forecast_times is not None:
            d["forecast_times"] = [format_time(t, dates) if dates else t for t in self.forecast_times]
        if self.as_of is not None:
            d["as_of"] = format_time(self.as_of, dates) if dates else self.as_of
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        """Build from a config mapping.

        ``forecast_times`` may be a list or ``{"start": .., "end": .., "step": 1}``;
        ``lags`` may be a list or ``{"start": .., "end": ..}`` (inclusive).
        """
        preds = []
        for p in d["predictors"]:
            preds.append(Predictor(p["variable"], tuple(_int_range(p.get("lags", [0])))))
        ft = d.get("forecast_times")
        if isinstance(ft, dict):
            step = int(ft.get("step", 1))
            ft = range(parse_time(ft["start"]), parse_time(ft["end"]) + 1, step)
        elif ft is not None:
            ft = [parse_time(t) for t in ft]
        as_of = d.get("as_of")
        return cls(
            response=d["response"],
            predictors=tuple(preds),
            aheads=tuple(_int_range(d["aheads"])),
            forecast_times=None if ft is None else tuple(ft),
            as_of=None if as_of is None else parse_time(as_of),
        )


def _int_range(spec) -> list[int]:
    if isinstance(spec, dict):
        return list(range(int(spec["start"]), int(spec["end"]) + 1, int(spec.get("step", 1))))
    return [int(x) for x in spec]


@dataclass(frozen=True)
class DesignSet:
    """Feature matrix ``X``, response ``Y`` and 0/1 observation mask ``W``.

    Rows are ordered by forecast time, then location. Unobserved cells of
    ``Y`` hold 0 and have ``W == 0``.
    """

    X: NDArray[np.float64] = field(repr=False)
    Y: NDArray[np.float64] = field(repr=False)
    W: NDArray[np.float64] = field(repr=False)
    row_index: tuple[tuple[str, int], ...]
    column_index: tuple[tuple[str, int], ...]
    aheads: tuple[int, ...]
    dates: bool = False

    def __post_init__(self):
        n = len(self.row_index)
        if self.X.shape != (n, len(self.column_index)):
            raise ValueError(f"X shape {self.X.shape} inconsistent with indices")
        if self.Y.shape != (n, len(self.aheads)) or self.W.shape != self.Y.shape:
            raise ValueError("Y/W shapes inconsistent with indices")

    @property
    def n_rows(self) -> int:
        return len(self.row_index)

    @property
    def m(self) -> int:
        return len(self.column_index)

    @property
    def q(self) -> int:
        return len(self.aheads)

    @property
    def complete(self) -> bool:
        return bool(np.all(self.W == 1))

    @property
    def forecast_times(self) -> NDArray[np.int64]:
        return np.array([t for _, t in self.row_index], dtype=np.int64)

    @property
    def locations(self) -> list[str]:
        return [g for g, _ in self.row_index]

    def take(self, rows: NDArray | Sequence[int]) -> "DesignSet":
        """Subset rows by integer positions or a boolean mask."""
        idx = np.asarray(rows)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        idx = idx.astype(np.int64)
        return replace(
            self,
            X=self.X[idx],
            Y=self.Y[idx],
            W=self.W[idx],
            row_index=tuple(self.row_index[i] for i in idx),
        )


def build_design(panel: PanelDataset, task: TaskSpec, retain_empty: bool = False) -> DesignSet:
    """Assemble ``X``, ``Y`` and ``W`` for every (location, forecast time).

    A row is kept when every lagged predictor is observed as of
    ``task.as_of``. Response cells not yet observed get ``W = 0``. Rows
    whose responses are all unobserved are dropped unless ``retain_empty``.
    """
    signals = panel.signals
    needed = [task.response] + [p.variable for p in task.predictors if p.variable != INTERCEPT]
    for var in needed:
        if var not in signals:
            raise UnknownVariable(f"variable {var!r} not found in panel")

    values = panel.snapshot(task.as_of)
    times = task.forecast_times if task.forecast_times is not None else tuple(panel.times)
    locations = panel.locations
    cols = task.column_index
    q = task.q

    X_rows: list[list[float]] = []
    Y_rows: list[list[float]] = []
    W_rows: list[list[float]] = []
    index: list[tuple[str, int]] = []
    for t in times:
        for geo in locations:
            x = []
            for var, lag in cols:
                if var == INTERCEPT:
                    x.append(1.0)
                    continue
                v = values.get((geo, var, t - lag))
                if v is None:
                    break
                x.append(v)
            if len(x) != len(cols):
                continue
            y = [0.0] * q
            w = [0.0] * q
            for j, a in enumerate(task.aheads):
                v = values.get((geo, task.response, t + a))
                if v is not None:
                    y[j] = v
                    w[j] = 1.0
            if not retain_empty and not any(w):
                continue
            X_rows.append(x)
            Y_rows.append(y)
            W_rows.append(w)
            index.append((geo, t))

    if not index:
        raise EmptyDesign("no (location, forecast time) has complete predictors and an observed response")
    return DesignSet(
        X=np.array(X_rows, dtype=np.float64),
        Y=np.array(Y_rows, dtype=np.float64),
        W=np.array(W_rows, dtype=np.float64),
        row_index=tuple(index),
        column_index=tuple(cols),
        aheads=task.aheads,
        dates=panel.dates,
    )


def split_by_time(design: DesignSet, cutoff: int) -> tuple[DesignSet, DesignSet]:
    """Rows with forecast time ``<= cutoff`` and the rest."""
    early = design.forecast_times <= cutoff
    return design.take(early), design.take(~early)


def calibration_cutoff(design: DesignSet, weeks: int) -> int:
    """Last fit time when the final ``weeks`` weeks of forecast times are held out."""
    return int(design.forecast_times.max()) - 7 * int(weeks)


def concat_designs(parts: Iterable[DesignSet]) -> DesignSet:
    parts = list(parts)
    first = parts[0]
    return replace(
        first,
        X=np.vstack([p.X for p in parts]),
        Y=np.vstack([p.Y for p in parts]),
        W=np.vstack([p.W for p in parts]),
        row_index=tuple(r for p in parts for r in p.row_index),
    )
