"""Least-squares multi-period forecasters.

Three fits share one coefficient container:

* ``fit_baseline``: an independent regression per ahead (``q x m`` matrix B).
* ``fit_smooth``: coefficients constrained to ``B = H Theta`` with an
  orthonormal basis ``H``; for complete responses this is an ordinary
  multi-response regression of ``Y H`` on ``X``.
* ``fit_smooth_weighted``: same constraint with a 0/1 response mask, solved
  as one regression on the observed rows of the Kronecker system
  ``(H kron X) vec(Theta^T) = vec(Y)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .basis import BasisMatrix
from .errors import IncompleteResponses, InsufficientRows, RankDeficient, ShapeMismatch
from .linalg import as_matrix, solve_least_squares
from .panel import DesignSet


@dataclass(frozen=True)
class CoefficientSet:
    kind: str
    column_index: tuple[tuple[str, int], ...]
    aheads: tuple[int, ...]
    B: NDArray[np.float64] | None = field(default=None, repr=False)
    Theta: NDArray[np.float64] | None = field(default=None, repr=False)
    basis: BasisMatrix | None = None

    def __post_init__(self):
        m, q = len(self.column_index), len(self.aheads)
        if self.kind == "baseline":
            if self.B is None or self.Theta is not None or self.basis is not None:
                raise ValueError("baseline coefficients need B only")
            if self.B.shape != (q, m):
                raise ShapeMismatch(f"B has shape {self.B.shape}, expected {(q, m)}")
        elif self.kind == "smooth":
            if self.Theta is None or self.basis is None or self.B is not None:
                raise ValueError("smooth coefficients need Theta and a basis")
            d = self.basis.df
            if self.Theta.shape != (d, m):
                raise ShapeMismatch(f"Theta has shape {self.Theta.shape}, expected {(d, m)}")
            if self.basis.H.shape[0] != q:
                raise ShapeMismatch("basis rows do not match the number of aheads")
        else:
            raise ValueError(f"unknown coefficient kind {self.kind!r}")

    @property
    def m(self) -> int:
        return len(self.column_index)

    @property
    def q(self) -> int:
        return len(self.aheads)

    def coefficient_matrix(self) -> NDArray[np.float64]:
        """The ``q x m`` matrix B (``H Theta`` for smooth fits)."""
        if self.kind == "baseline":
            return self.B
        return self.basis.H @ self.Theta


@dataclass(frozen=True)
class ForecastFrame:
    """Predictions for each (location, forecast time) row and each ahead."""

    values: NDArray[np.float64] = field(repr=False)
    row_index: tuple[tuple[str, int], ...]
    aheads: tuple[int, ...]
    quantile: float | None = None

    def __post_init__(self):
        if self.values.shape != (len(self.row_index), len(self.aheads)):
            raise ShapeMismatch(
                f"values shape {self.values.shape} does not match "
                f"{len(self.row_index)} rows x {len(self.aheads)} aheads"
            )


def _check_design(design: DesignSet) -> None:
    if design.n_rows == 0:
        raise InsufficientRows("design has no rows")


def fit_baseline(design: DesignSet) -> CoefficientSet:
    """Per-ahead least squares on the rows where that ahead is observed.

    Aheads sharing the same observation pattern are solved together.
    """
    _check_design(design)
    X, Y, W = design.X, design.Y, design.W
    m, q = design.m, design.q
    B = np.empty((q, m))
    groups: dict[bytes, list[int]] = {}
    for j in range(q):
        groups.setdefault((W[:, j] != 0).tobytes(), []).append(j)
    for cols in groups.values():
        rows = W[:, cols[0]] != 0
        if rows.sum() < m:
            raise InsufficientRows(f"{int(rows.sum())} observed rows for {m} coefficients", ahead=cols[0])
        try:
            C = solve_least_squares(X[rows], Y[np.ix_(rows, cols)])
        except RankDeficient as exc:
            raise RankDeficient(str(exc), ahead=cols[0]) from None
        B[cols, :] = C.T
    return CoefficientSet("baseline", design.column_index, design.aheads, B=B)


def fit_smooth(design: DesignSet, basis: BasisMatrix) -> CoefficientSet:
    """Smooth fit for complete responses: regress ``Y H`` on ``X``."""
    _check_design(design)
    if not design.complete:
        raise IncompleteResponses("responses are partially unobserved; use fit_smooth_weighted")
    _check_basis(design, basis)
    ThetaT = solve_least_squares(design.X, design.Y @ basis.H)
    return CoefficientSet("smooth", design.column_index, design.aheads, Theta=ThetaT.T.copy(), basis=basis)


def kronecker_rows(
    X: NDArray[np.float64], H: NDArray[np.float64], rows: NDArray[np.int64], aheads: NDArray[np.int64]
) -> NDArray[np.float64]:
    """Selected rows of ``H kron X``.

    Row ``(r, j)`` of the full product is ``kron(H[j], X[r])``; the columns
    are ordered like ``vec(Theta^T)``, i.e. ``basis_index * m + feature``.
    """
    d, m = H.shape[1], X.shape[1]
    return (H[aheads][:, :, None] * X[rows][:, None, :]).reshape(len(rows), d * m)


def observed_cells(W: NDArray[np.float64]) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    """(row, ahead) positions of observed cells in column-stacked order."""
    aheads, rows = np.nonzero(W.T)
    return rows, aheads


def fit_smooth_weighted(design: DesignSet, basis: BasisMatrix) -> CoefficientSet:
    """Smooth fit with a binary response mask.

    Unobserved cells are deleted from the vectorized problem, and ordinary
    least squares is run on what remains. The expanded matrix holds
    (#observed cells) x (d*m) floats.
    """
    _check_design(design)
    _check_basis(design, basis)
    d, m = basis.df, design.m
    rows, aheads = observed_cells(design.W)
    if rows.size < d * m:
        raise InsufficientRows(f"{rows.size} observed cells for {d * m} coefficients")
    Xt = kronecker_rows(design.X, basis.H, rows, aheads)
    y = design.Y[rows, aheads]
    theta = solve_least_squares(Xt, y)
    return CoefficientSet("smooth", design.column_index, design.aheads, Theta=theta.reshape(d, m), basis=basis)


def fit_smooth_auto(design: DesignSet, basis: BasisMatrix) -> CoefficientSet:
    """Use the fast path when responses are complete, the Kronecker path otherwise."""
    if design.complete:
        return fit_smooth(design, basis)
    return fit_smooth_weighted(design, basis)


def _check_basis(design: DesignSet, basis: BasisMatrix) -> None:
    if tuple(basis.spec.aheads) != tuple(float(a) for a in design.aheads):
        raise ShapeMismatch("basis aheads do not match the design aheads")


def predict(
    coef: CoefficientSet,
    X_new: ArrayLike,
    row_index: Sequence[tuple[str, int]] | None = None,
    quantile: float | None = None,
) -> ForecastFrame:
    """Point forecasts ``X_new B^T`` (``X_new Theta^T H^T`` for smooth fits)."""
    X = as_matrix(X_new, "X_new")
    if X.shape[1] != coef.m:
        raise ShapeMismatch(f"X_new has {X.shape[1]} columns, model expects {coef.m}")
    if coef.kind == "smooth":
        values = (X @ coef.Theta.T) @ coef.basis.H.T
    else:
        values = X @ coef.B.T
    if row_index is None:
        row_index = tuple(("", i) for i in range(X.shape[0]))
    return ForecastFrame(values, tuple(row_index), coef.aheads, quantile)


def predict_design(coef: CoefficientSet, design: DesignSet, quantile: float | None = None) -> ForecastFrame:
    if tuple(design.column_index) != tuple(coef.column_index):
        raise ShapeMismatch("design columns do not match the model's columns")
    return predict(coef, design.X, design.row_index, quantile)


def training_sse(coef: CoefficientSet, design: DesignSet) -> float:
    """Sum of squared residuals over observed cells."""
    resid = design.Y - predict_design(coef, design).values
    return float(np.sum(design.W * resid**2))
