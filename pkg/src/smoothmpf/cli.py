"""Command-line front end: ``smoothmpf {simulate,fit,predict,calibrate,evaluate,cv}``.

Exit codes: 0 success, 2 usage error, 3 numerical/fit failure, 4 data or
schema mismatch. Logs go to stderr; data goes to files or stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .artifact import ModelArtifact, load_artifact, save_artifact
from .basis import basis_for
from .calibration import apply_margins, compute_margins, interval_errors
from .errors import DataError, FitError
from .lsq import CoefficientSet, fit_baseline, fit_smooth_auto, predict_design, training_sse
from .metrics import compute_metrics, write_metrics
from .panel import (
    DesignSet,
    TaskSpec,
    build_design,
    calibration_cutoff,
    format_time,
    load_panel,
    parse_time,
    split_by_time,
    write_panel,
)
from .quantile import fit_quantiles, pinball_objective
from .simulation import SimConfig, cv_select_df, sim_panels, simulate

log = logging.getLogger("smoothmpf")

FORECAST_HEADER = ("geo_id", "forecast_time", "ahead", "quantile", "value", "lower", "upper")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _time(text: str) -> int:
    try:
        return parse_time(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _snr(text: str) -> float:
    if text.lower() in ("inf", "noiseless"):
        return math.inf
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad SNR {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("SNR must be positive")
    return v


def load_task(path: str | Path) -> tuple[TaskSpec, bool]:
    """Task config from a JSON config file or from a model artifact."""
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from exc
    if "format_version" in d and "task" in d:
        return TaskSpec.from_dict(d["task"]), bool(d.get("dates", False))
    try:
        return TaskSpec.from_dict(d), False
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed task config ({exc})") from exc


def _with_as_of(task: TaskSpec, as_of: int | None) -> TaskSpec:
    return task if as_of is None else replace(task, as_of=as_of)


def _ridge_augment(design: DesignSet, lam: float) -> DesignSet:
    # pseudo-observations sqrt(lam) * I with zero response shrink coefficients
    m, q = design.m, design.q
    return replace(
        design,
        X=np.vstack([design.X, math.sqrt(lam) * np.eye(m)]),
        Y=np.vstack([design.Y, np.zeros((m, q))]),
        W=np.vstack([design.W, np.ones((m, q))]),
        row_index=design.row_index + tuple(("__ridge__", -1 - k) for k in range(m)),
    )


def fit_model(
    design: DesignSet,
    model: str,
    df: int | None,
    quantiles: Sequence[float] | None,
    ridge: float = 0.0,
    dates: bool = False,
) -> tuple[CoefficientSet | None, object, dict]:
    """Dispatch to the right fitter; returns (point coef, quantile set, metadata)."""
    basis = basis_for(design.aheads, df) if model == "smooth" else None
    fit_design = _ridge_augment(design, ridge) if ridge > 0 else design
    meta: dict = {
        "n_rows": design.n_rows,
        "n_observed": int(design.W.sum()),
        "fit_times": [format_time(int(t), dates) for t in (design.forecast_times.min(), design.forecast_times.max())],
    }
    if ridge > 0:
        meta["ridge_jitter"] = ridge
    if quantiles:
        qset = fit_quantiles(fit_design, quantiles, basis)
        objs = {repr(t): pinball_objective(c, design, t) for t, c in zip(qset.levels, qset.coefs)}
        meta["pinball_objective"] = objs
        for t, v in objs.items():
            log.info("tau=%s training pinball objective %.10g", t, v)
        return None, qset, meta
    coef = fit_baseline(fit_design) if basis is None else fit_smooth_auto(fit_design, basis)
    if basis is None:
        resid = design.W * (design.Y - predict_design(coef, design).values) ** 2
        per = resid.sum(axis=0)
        meta["sse_per_ahead"] = [float(v) for v in per]
        for a, v in zip(design.aheads, per):
            log.info("ahead %s training SSE %.10g", a, v)
    meta["sse"] = training_sse(coef, design)
    log.info("training SSE %.10g", meta["sse"])
    return coef, None, meta


def _write_forecasts(fh, art: ModelArtifact, design: DesignSet, clamp_zero: bool) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(FORECAST_HEADER)
    dates = art.dates or design.dates
    if art.coef is not None:
        frames = {None: predict_design(art.coef, design)}
        lo = hi = None
    else:
        frames = art.quantiles.predict(design)
        lo = hi = None
        if art.margins is not None:
            iv = apply_margins(frames[art.margins.lower_tau], frames[art.margins.upper_tau], art.margins)
            lo, hi = iv.lower.values, iv.upper.values
        elif len(art.levels) >= 2:
            lo, hi = frames[art.levels[0]].values, frames[art.levels[-1]].values
    for i, (geo, t) in enumerate(design.row_index):
        for j, a in enumerate(design.aheads):
            bounds = ["", ""] if lo is None else [repr(float(lo[i, j])), repr(float(hi[i, j]))]
            for tau, frame in frames.items():
                v = float(frame.values[i, j])
                if clamp_zero:
                    v = max(v, 0.0)
                w.writerow([geo, format_time(t, dates), a, "" if tau is None else repr(tau), repr(v), *bounds])


def _read_forecasts(path: str | Path):
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != FORECAST_HEADER:
            raise DataError(f"{path}: forecast header must be {','.join(FORECAST_HEADER)}")
        for n, r in enumerate(reader, start=2):
            if not r:
                continue
            try:
                geo, t, a, tau, v, lo, hi = r
                rows.append(
                    (
                        geo,
                        parse_time(t),
                        int(a),
                        None if tau == "" else float(tau),
                        float(v),
                        None if lo == "" else float(lo),
                        None if hi == "" else float(hi),
                    )
                )
            except ValueError as exc:
                raise DataError(f"{path}: row {n}: {exc}") from None
    return rows


# ---------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    cfg = SimConfig(args.n, args.p, args.q, args.true_df, args.snr, args.missing_frac, args.seed)
    sim = simulate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    observed, full = sim_panels(sim)
    write_panel(out / "panel.csv", observed)
    write_panel(out / "truth.csv", full)
    truth_coef = CoefficientSet("smooth", sim.design.column_index, sim.design.aheads, Theta=sim.Theta, basis=sim.basis)
    meta = {
        "simulation": {
            "n_locations": cfg.n_locations,
            "p_predictors": cfg.p_predictors,
            "q_aheads": cfg.q_aheads,
            "true_df": cfg.true_df,
            "snr": "inf" if math.isinf(cfg.snr) else cfg.snr,
            "missing_frac": cfg.missing_frac,
            "seed": cfg.seed,
            "sigma": sim.sigma,
            "n_masked": int((sim.design.W == 0).sum()),
        }
    }
    save_artifact(out / "truth_model.json", ModelArtifact(sim.task, "smooth", coef=truth_coef, metadata=meta))
    log.info("wrote %s, %s and %s", out / "panel.csv", out / "truth.csv", out / "truth_model.json")
    return 0


def _train_design(args) -> tuple[TaskSpec, DesignSet, bool]:
    task, dates = load_task(args.config)
    task = _with_as_of(task, args.as_of)
    panel = load_panel(args.train)
    design = build_design(panel, task)
    return task, design, dates or panel.dates


def cmd_fit(args) -> int:
    task, design, dates = _train_design(args)
    if args.model == "smooth":
        if args.df is None:
            raise UsageError("--model smooth requires --df")
        if not 1 <= args.df <= task.q:
            raise UsageError(f"--df must lie in [1, {task.q}]")
    coef, qset, meta = fit_model(design, args.model, args.df, args.quantiles, args.ridge_jitter, dates)
    art = ModelArtifact(task, args.model, coef=coef, quantiles=qset, dates=dates, metadata=meta)
    save_artifact(args.out, art)
    log.info("model written to %s", args.out)
    return 0


def _prediction_design(args, art: ModelArtifact) -> DesignSet:
    task = art.task
    if args.config:
        task_cfg, _ = load_task(args.config)
        if task_cfg.column_index != task.column_index or task_cfg.aheads != task.aheads:
            raise DataError("config columns/aheads do not match the model")
        task = task_cfg
    else:
        task = replace(task, forecast_times=None, as_of=None)
    task = _with_as_of(task, args.as_of)
    return build_design(load_panel(args.data), task, retain_empty=True)


def cmd_predict(args) -> int:
    art = load_artifact(args.model)
    design = _prediction_design(args, art)
    if args.out in (None, "-"):
        _write_forecasts(sys.stdout, art, design, args.clamp_zero)
    else:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            _write_forecasts(fh, art, design, args.clamp_zero)
    log.info("%d forecast rows x %d aheads", design.n_rows, design.q)
    return 0


def cmd_calibrate(args) -> int:
    art = load_artifact(args.model)
    if len(art.levels) < 2:
        raise DataError("calibration needs a quantile model with at least two levels")
    task = _with_as_of(art.task, args.as_of)
    design = build_design(load_panel(args.train), task)
    cutoff = calibration_cutoff(design, args.cal_weeks)
    fit_part, cal_part = split_by_time(design, cutoff)
    dates = art.dates
    log.info(
        "fit on forecast times <= %s, calibrate on %s..%s",
        format_time(cutoff, dates),
        format_time(cutoff + 1, dates),
        format_time(int(design.forecast_times.max()), dates),
    )
    if fit_part.n_rows == 0 or cal_part.n_rows == 0:
        raise DataError("calibration split leaves an empty fit or calibration part")
    df = art.basis.df if art.basis is not None else None
    _, qset, meta = fit_model(fit_part, art.kind, df, art.levels, dates=dates)
    lo_tau, hi_tau = qset.levels[0], qset.levels[-1]
    frames = qset.predict(cal_part)
    E_lo, E_hi = interval_errors(cal_part.Y, frames[lo_tau], frames[hi_tau], cal_part.W)
    margins = compute_margins(E_lo, E_hi, args.level, lo_tau, hi_tau)
    log.info("margins: lower %.10g upper %.10g from %d calibration cells", margins.Q_lower, margins.Q_upper, E_lo.size)
    meta.update(
        {
            "calibration": {
                "cutoff": format_time(cutoff, dates),
                "cal_weeks": args.cal_weeks,
                "n_cal_cells": int(E_lo.size),
            }
        }
    )
    out = ModelArtifact(task, art.kind, quantiles=qset, margins=margins, dates=dates, metadata=meta)
    save_artifact(args.out, out)
    return 0


def cmd_evaluate(args) -> int:
    rows = _read_forecasts(args.forecasts)
    if not rows:
        raise DataError("forecast file has no rows")
    task, _ = load_task(args.config)
    panel = load_panel(args.data)
    truth_values = panel.snapshot(args.as_of)

    taus = {r[3] for r in rows}
    if taus == {None}:
        median_tau = None
    elif 0.5 in taus:
        median_tau = 0.5
    else:
        raise DataError("forecasts have quantiles but no 0.5 level to score")
    cells = sorted({(r[1], r[0]) for r in rows})
    aheads = sorted({r[2] for r in rows})
    ri = {c: i for i, c in enumerate(cells)}
    ai = {a: j for j, a in enumerate(aheads)}
    shape = (len(cells), len(aheads))
    med = np.zeros(shape)
    lo = np.full(shape, np.nan)
    hi = np.full(shape, np.nan)
    have = np.zeros(shape, dtype=bool)
    for geo, t, a, tau, v, l, h in rows:
        i, j = ri[(t, geo)], ai[a]
        if tau == median_tau:
            med[i, j] = v
            have[i, j] = True
        if l is not None:
            lo[i, j] = l
        if h is not None:
            hi[i, j] = h
    Y = np.zeros(shape)
    mask = np.zeros(shape)
    for (t, geo), i in ri.items():
        for a, j in ai.items():
            v = truth_values.get((geo, task.response, t + a))
            if v is not None and have[i, j]:
                Y[i, j] = v
                mask[i, j] = 1.0
    has_interval = not np.isnan(lo[mask == 1]).any() and not np.isnan(hi[mask == 1]).any()
    report = compute_metrics(
        Y,
        med,
        np.nan_to_num(lo) if has_interval else None,
        np.nan_to_num(hi) if has_interval else None,
        mask,
        aheads,
    )
    log.info("MAE %.6g over %d cells", report.mae, report.m)
    if args.out in (None, "-"):
        write_metrics(sys.stdout, report)
    else:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            write_metrics(fh, report)
    return 0


def cmd_cv(args) -> int:
    _, design, _ = _train_design(args)
    grid = args.df_grid or list(range(1, min(6, design.q) + 1))
    if any(not 1 <= d <= design.q for d in grid):
        raise UsageError(f"--df-grid values must lie in [1, {design.q}]")
    res = cv_select_df(design, grid, args.folds, args.scheme, args.seed)
    lines = ["df,fold,mae"]
    for row in res.table():
        lines.append(f"{row['df']},{row['fold']},{row['mae']!r}")
    for d, v in zip(res.dfs, res.mean_mae):
        lines.append(f"{d},mean,{float(v)!r}")
    text = "\n".join(lines) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    log.info("best degrees of freedom: %d", res.best_df)
    print(f"best_df={res.best_df}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smoothmpf", description="Smooth multi-period forecasting.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a synthetic panel, its full truth and the true model")
    s.add_argument("--n", type=int, default=1000, help="number of locations")
    s.add_argument("--p", type=int, default=10, help="number of predictors")
    s.add_argument("--q", type=int, default=30, help="number of aheads (0..q-1)")
    s.add_argument("--true-df", type=int, default=3)
    s.add_argument("--snr", type=_snr, default=1.0, help="signal-to-noise ratio, or 'noiseless'")
    s.add_argument("--missing-frac", type=float, default=0.1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    def data_flags(sp, train=True):
        if train:
            sp.add_argument("--train", required=True, help="training panel CSV")
        sp.add_argument("--as-of", type=_time, default=None, help="only use data issued on or before this time")

    f = sub.add_parser("fit", help="fit a baseline or smooth model")
    data_flags(f)
    f.add_argument("--config", required=True, help="task config JSON (or a model artifact)")
    f.add_argument("--model", choices=("baseline", "smooth"), default="smooth")
    f.add_argument("--df", type=int, default=None, help="number of basis functions for --model smooth")
    f.add_argument("--quantiles", type=_floats, default=None, help="e.g. 0.2,0.5,0.8")
    f.add_argument("--ridge-jitter", type=float, default=0.0, help="ridge pseudo-observation weight (default off)")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="forecast from a model artifact")
    pr.add_argument("--model", required=True, help="model artifact")
    pr.add_argument("--data", required=True, help="panel CSV with predictor history")
    pr.add_argument("--config", default=None, help="optional task config restricting forecast times")
    pr.add_argument("--as-of", type=_time, default=None)
    pr.add_argument("--clamp-zero", action="store_true", help="floor point forecasts at 0")
    pr.add_argument("--out", default=None)
    pr.set_defaults(func=cmd_predict)

    c = sub.add_parser("calibrate", help="refit on the early part and add conformal margins")
    c.add_argument("--model", required=True, help="quantile model artifact")
    data_flags(c)
    c.add_argument("--cal-weeks", type=int, default=4)
    c.add_argument("--level", type=float, default=0.8)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_calibrate)

    e = sub.add_parser("evaluate", help="score a forecasts CSV against observed data")
    e.add_argument("--forecasts", required=True)
    e.add_argument("--data", required=True, help="panel CSV with the truth")
    e.add_argument("--config", required=True, help="task config or model artifact (names the response)")
    e.add_argument("--as-of", type=_time, default=None)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_evaluate)

    v = sub.add_parser("cv", help="choose degrees of freedom by cross-validation")
    data_flags(v)
    v.add_argument("--config", required=True)
    v.add_argument("--df-grid", type=_ints, default=None)
    v.add_argument("--folds", type=int, default=5)
    v.add_argument("--scheme", choices=("by_location", "by_time"), default="by_location")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_cv)
    return p


def _validate(parser: argparse.ArgumentParser, args) -> None:
    if args.command == "simulate":
        if not 0.0 <= args.missing_frac < 1.0:
            parser.error("--missing-frac must lie in [0, 1)")
        if min(args.n, args.p, args.q, args.true_df) < 1:
            parser.error("--n, --p, --q and --true-df must be positive")
        if args.true_df > args.q:
            parser.error("--true-df cannot exceed --q")
    if args.command == "fit":
        if args.quantiles is not None and any(not 0 < t < 1 for t in args.quantiles):
            parser.error("--quantiles must lie strictly between 0 and 1")
        if args.ridge_jitter < 0:
            parser.error("--ridge-jitter must be non-negative")
    if args.command == "calibrate":
        if not 0 < args.level < 1:
            parser.error("--level must lie strictly between 0 and 1")
        if args.cal_weeks < 1:
            parser.error("--cal-weeks must be at least 1")
    if args.command == "cv" and args.folds < 2:
        parser.error("--folds must be at least 2")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    _validate(parser, args)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"smoothmpf: error: {exc}", file=sys.stderr)
        return 2
    except FitError as exc:
        log.error("fit failed: %s: %s", type(exc).__name__, exc)
        return 3
    except (DataError, OSError, ValueError) as exc:
        log.error("data error: %s: %s", type(exc).__name__, exc)
        return 4


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
