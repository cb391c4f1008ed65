"""Split-conformal calibration of quantile prediction intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import AlignmentError, EmptyCalibrationSet
from .lsq import ForecastFrame


@dataclass(frozen=True)
class CalibrationMargins:
    lower_tau: float
    upper_tau: float
    Q_lower: float
    Q_upper: float
    level: float

    def __post_init__(self):
        if not self.lower_tau < self.upper_tau:
            raise ValueError("lower_tau must be below upper_tau")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie strictly between 0 and 1")

    def to_dict(self) -> dict:
        return {
            "lower_tau": self.lower_tau,
            "upper_tau": self.upper_tau,
            "Q_lower": self.Q_lower,
            "Q_upper": self.Q_upper,
            "level": self.level,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationMargins":
        return cls(**{k: float(d[k]) for k in ("lower_tau", "upper_tau", "Q_lower", "Q_upper", "level")})


@dataclass(frozen=True)
class IntervalFrame:
    lower: ForecastFrame
    upper: ForecastFrame

    @property
    def degenerate(self) -> int:
        """Number of cells whose lower bound exceeds the upper bound."""
        return int(np.sum(self.lower.values > self.upper.values))


def _aligned(*frames) -> None:
    ref = None
    for f in frames:
        if not isinstance(f, ForecastFrame):
            continue
        if ref is None:
            ref = f
        elif f.row_index != ref.row_index or f.aheads != ref.aheads:
            raise AlignmentError("frames are not aligned on (location, time, ahead)")


def _values(obj) -> NDArray[np.float64]:
    return obj.values if isinstance(obj, ForecastFrame) else np.asarray(obj, dtype=np.float64)


def interval_errors(
    truth: ArrayLike | ForecastFrame,
    lower: ArrayLike | ForecastFrame,
    upper: ArrayLike | ForecastFrame,
    mask: ArrayLike | None = None,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Signed exceedances ``lower - truth`` and ``truth - upper`` on observed cells.

    Positive entries mark truths outside the interval on that side.
    """
    _aligned(truth, lower, upper)
    Y, lo, hi = _values(truth), _values(lower), _values(upper)
    if not (Y.shape == lo.shape == hi.shape):
        raise AlignmentError(f"shapes differ: {Y.shape}, {lo.shape}, {hi.shape}")
    if mask is None:
        keep = np.ones(Y.shape, dtype=bool)
    else:
        keep = np.asarray(mask) != 0
        if keep.shape != Y.shape:
            raise AlignmentError("mask shape does not match the frames")
    # column-stacked order, consistent with the vectorized fits
    keep_t = keep.T
    return (lo.T - Y.T)[keep_t], (Y.T - hi.T)[keep_t]


def conformal_quantile(errors: ArrayLike, level: float) -> float:
    """Order statistic of rank ``ceil(level * (M + 1))``, clamped to ``[1, M]``."""
    e = np.sort(np.asarray(errors, dtype=np.float64).ravel())
    M = e.size
    if M == 0:
        raise EmptyCalibrationSet("no calibration errors")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly between 0 and 1")
    # guard against 0.7 * 10 = 7.000000000000001 style round-up
    rank = math.ceil(level * (M + 1) - 1e-9)
    rank = min(max(rank, 1), M)
    return float(e[rank - 1])


def compute_margins(
    E_lower: ArrayLike,
    E_upper: ArrayLike,
    level: float = 0.8,
    lower_tau: float = 0.2,
    upper_tau: float = 0.8,
) -> CalibrationMargins:
    return CalibrationMargins(
        lower_tau=float(lower_tau),
        upper_tau=float(upper_tau),
        Q_lower=conformal_quantile(E_lower, level),
        Q_upper=conformal_quantile(E_upper, level),
        level=float(level),
    )


def apply_margins(lower: ForecastFrame, upper: ForecastFrame, margins: CalibrationMargins) -> IntervalFrame:
    """Shift the lower bound down by ``Q_lower`` and the upper bound up by ``Q_upper``.

    Negative margins narrow the interval and may invert it; such cells are
    counted by ``IntervalFrame.degenerate``.
    """
    _aligned(lower, upper)
    if lower.values.shape != upper.values.shape:
        raise AlignmentError("lower and upper frames differ in shape")
    return IntervalFrame(
        lower=replace(lower, values=lower.values - margins.Q_lower),
        upper=replace(upper, values=upper.values + margins.Q_upper),
    )
