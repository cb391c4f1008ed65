"""Synthetic data, the degrees-of-freedom simulation study, and CV selection of d.

Random streams
--------------
Every draw comes from a Philox counter-based generator keyed by
``SeedSequence(seed, spawn_key=(stream,))`` where ``stream`` is fixed per
purpose (``STREAMS``). Mask placement, noise and coefficients are therefore
reproducible independently of each other and of numpy's global state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .basis import BasisMatrix, basis_for
from .errors import FitError
from .lsq import fit_baseline, fit_smooth_auto, predict_design
from .metrics import compute_metrics
from .panel import DesignSet, PanelDataset, Predictor, Record, TaskSpec

STREAMS = {"features": 0, "coefficients": 1, "noise": 2, "mask": 3, "folds": 4, "ar": 5}


def rng_stream(seed: int, purpose: str) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[purpose],))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SimConfig:
    n_locations: int = 1000
    p_predictors: int = 10
    q_aheads: int = 30
    true_df: int = 3
    snr: float = 1.0
    missing_frac: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if min(self.n_locations, self.p_predictors, self.q_aheads, self.true_df) < 1:
            raise ValueError("sizes must be positive")
        if self.true_df > self.q_aheads:
            raise ValueError("true_df cannot exceed q_aheads")
        if not self.snr > 0:
            raise ValueError("snr must be positive (use inf for noiseless data)")
        if not 0.0 <= self.missing_frac < 1.0:
            raise ValueError("missing_frac must lie in [0, 1)")


@dataclass(frozen=True)
class SimResult:
    config: SimConfig
    design: DesignSet
    Y_full: NDArray[np.float64]
    Theta: NDArray[np.float64]
    basis: BasisMatrix
    sigma: float

    @property
    def task(self) -> TaskSpec:
        return TaskSpec(
            response="y",
            predictors=tuple(Predictor(f"x{k + 1}", (0,)) for k in range(self.config.p_predictors)),
            aheads=self.design.aheads,
            forecast_times=(0,),
        )


def simulate(cfg: SimConfig) -> SimResult:
    """One forecast date, lag-0 predictors and ``Y = X Theta^T H^T + E``.

    ``X`` and ``Theta`` are standard normal, ``H`` is the orthonormal
    polynomial basis with ``true_df`` columns on aheads ``0..q-1``, and the
    noise variance is the empirical variance of the signal divided by
    ``snr``. Exactly ``round(missing_frac * n * q)`` cells are masked.
    """
    n, p, q, d = cfg.n_locations, cfg.p_predictors, cfg.q_aheads, cfg.true_df
    aheads = tuple(range(q))
    basis = basis_for(aheads, d)
    X = rng_stream(cfg.seed, "features").standard_normal((n, p))
    Theta = rng_stream(cfg.seed, "coefficients").standard_normal((d, p))
    signal = X @ Theta.T @ basis.H.T
    sigma = 0.0 if math.isinf(cfg.snr) else float(np.sqrt(np.var(signal) / cfg.snr))
    E = rng_stream(cfg.seed, "noise").standard_normal((n, q))
    Y = signal + sigma * E

    W = np.ones((n, q))
    n_missing = int(round(cfg.missing_frac * n * q))
    if n_missing:
        cells = rng_stream(cfg.seed, "mask").choice(n * q, size=n_missing, replace=False)
        W.flat[cells] = 0.0
    design = DesignSet(
        X=X,
        Y=Y * W,
        W=W,
        row_index=tuple((f"L{i:04d}", 0) for i in range(n)),
        column_index=tuple((f"x{k + 1}", 0) for k in range(p)),
        aheads=aheads,
    )
    return SimResult(cfg, design, Y, Theta, basis, sigma)


def sim_panels(sim: SimResult) -> tuple[PanelDataset, PanelDataset]:
    """(observed panel, full-truth panel) in long format."""
    obs: list[Record] = []
    full: list[Record] = []
    d = sim.design
    for i, (geo, _) in enumerate(d.row_index):
        for k, (var, _) in enumerate(d.column_index):
            rec = Record(geo, 0, var, float(d.X[i, k]))
            obs.append(rec)
            full.append(rec)
        for j, a in enumerate(d.aheads):
            rec = Record(geo, int(a), "y", float(sim.Y_full[i, j]))
            full.append(rec)
            if d.W[i, j]:
                obs.append(rec)
    return PanelDataset(tuple(obs)), PanelDataset(tuple(full))


def split_locations(design: DesignSet, train_frac: float = 0.5) -> tuple[DesignSet, DesignSet]:
    """First ``train_frac`` of the sorted locations for training, the rest for testing."""
    locs = sorted(set(design.locations))
    n_train = int(round(train_frac * len(locs)))
    train = set(locs[:n_train])
    in_train = np.array([g in train for g in design.locations])
    return design.take(in_train), design.take(~in_train)


def holdout_mae(coef, test: DesignSet) -> float:
    return compute_metrics(test.Y, predict_design(coef, test), mask=test.W).mae


@dataclass(frozen=True)
class StudyResult:
    snrs: tuple[float, ...]
    dfs: tuple[int, ...]
    smooth_mae: NDArray[np.float64]  # (snr, seed, df)
    baseline_mae: NDArray[np.float64]  # (snr, seed)

    def mean_curve(self, i: int) -> NDArray[np.float64]:
        return self.smooth_mae[i].mean(axis=0)

    def mean_baseline(self, i: int) -> float:
        return float(self.baseline_mae[i].mean())

    def best_df(self, i: int) -> int:
        return self.dfs[int(np.argmin(self.mean_curve(i)))]

    def se_curve(self, i: int) -> NDArray[np.float64]:
        """Standard error across seeds."""
        s = self.smooth_mae[i]
        return s.std(axis=0, ddof=1) / np.sqrt(s.shape[0])


def simulation_study(
    snrs: Sequence[float] = (0.1, 0.5, 1.0, 2.0),
    dfs: Sequence[int] = (1, 2, 3, 4, 5, 6),
    seeds: Sequence[int] = tuple(range(10)),
    n_locations: int = 1000,
    p_predictors: int = 10,
    q_aheads: int = 30,
    true_df: int = 3,
    missing_frac: float = 0.1,
) -> StudyResult:
    """Test MAE of smooth fits over ``dfs`` and of the baseline, per SNR and seed.

    Half the locations train, the other half test; MAE is taken over the
    observed test cells.
    """
    smooth = np.empty((len(snrs), len(seeds), len(dfs)))
    base = np.empty((len(snrs), len(seeds)))
    aheads = tuple(range(q_aheads))
    bases = {d: basis_for(aheads, d) for d in dfs}
    for i, snr in enumerate(snrs):
        for s, seed in enumerate(seeds):
            sim = simulate(SimConfig(n_locations, p_predictors, q_aheads, true_df, snr, missing_frac, seed))
            train, test = split_locations(sim.design)
            base[i, s] = holdout_mae(fit_baseline(train), test)
            for k, d in enumerate(dfs):
                smooth[i, s, k] = holdout_mae(fit_smooth_auto(train, bases[d]), test)
    return StudyResult(tuple(snrs), tuple(dfs), smooth, base)


@dataclass(frozen=True)
class CVResult:
    best_df: int
    dfs: tuple[int, ...]
    fold_mae: NDArray[np.float64]  # (df, fold)

    @property
    def mean_mae(self) -> NDArray[np.float64]:
        return self.fold_mae.mean(axis=1)

    def table(self) -> list[dict]:
        rows = []
        for i, d in enumerate(self.dfs):
            for f in range(self.fold_mae.shape[1]):
                rows.append({"df": d, "fold": f, "mae": float(self.fold_mae[i, f])})
        return rows


def assign_folds(design: DesignSet, folds: int, scheme: str = "by_location", seed: int = 0) -> NDArray[np.int64]:
    """Fold id per design row.

    ``by_location`` shuffles the sorted locations with the ``folds`` stream
    and deals them round-robin; ``by_time`` cuts the sorted forecast times
    into ``folds`` contiguous blocks.
    """
    if folds < 2:
        raise ValueError("at least two folds are required")
    if scheme == "by_location":
        locs = sorted(set(design.locations))
        if len(locs) < folds:
            raise ValueError(f"{len(locs)} locations cannot fill {folds} folds")
        perm = rng_stream(seed, "folds").permutation(len(locs))
        fold_of = {locs[j]: i % folds for i, j in enumerate(perm)}
        return np.array([fold_of[g] for g in design.locations], dtype=np.int64)
    if scheme == "by_time":
        times = np.unique(design.forecast_times)
        if times.size < folds:
            raise ValueError(f"{times.size} forecast times cannot fill {folds} folds")
        fold_of = {}
        for f, block in enumerate(np.array_split(times, folds)):
            for t in block:
                fold_of[int(t)] = f
        return np.array([fold_of[int(t)] for t in design.forecast_times], dtype=np.int64)
    raise ValueError(f"unknown CV scheme {scheme!r}")


def cv_select_df(
    design: DesignSet,
    df_grid: Sequence[int],
    folds: int = 5,
    scheme: str = "by_location",
    seed: int = 0,
) -> CVResult:
    """Choose the number of basis functions by K-fold CV on test MAE.

    Ties go to the smaller ``d``.
    """
    dfs = tuple(sorted(set(int(d) for d in df_grid)))
    fold_id = assign_folds(design, folds, scheme, seed)
    bases = {d: basis_for(design.aheads, d) for d in dfs}
    maes = np.full((len(dfs), folds), np.nan)
    for f in range(folds):
        train, test = design.take(fold_id != f), design.take(fold_id == f)
        for i, d in enumerate(dfs):
            try:
                coef = fit_smooth_auto(train, bases[d])
            except FitError as exc:
                exc.args = (f"fold {f}: {exc}",)
                raise
            maes[i, f] = holdout_mae(coef, test)
    mean = maes.mean(axis=1)
    best = dfs[0]
    best_val = mean[0]
    for d, v in zip(dfs[1:], mean[1:]):
        if v < best_val:
            best, best_val = d, v
    return CVResult(best, dfs, maes)


def simulate_ar_panel(
    n_locations: int = 50,
    n_times: int = 200,
    phi: float = 0.9,
    noise: float = 1.0,
    seed: int = 0,
) -> PanelDataset:
    """Independent stationary AR(1) series per location, as signal ``y``."""
    rng = rng_stream(seed, "ar")
    eps = rng.standard_normal((n_locations, n_times)) * noise
    y = np.empty_like(eps)
    y[:, 0] = eps[:, 0] / np.sqrt(1.0 - phi**2)
    for t in range(1, n_times):
        y[:, t] = phi * y[:, t - 1] + eps[:, t]
    recs = tuple(
        Record(f"L{i:04d}", t, "y", float(y[i, t])) for i in range(n_locations) for t in range(n_times)
    )
    return PanelDataset(recs)
