"""Quantile regression forecasters built on a weighted pinball-loss solver.

The solver works on the bounded dual of the quantile regression LP::

    maximize  y'a   subject to  X'a = (1 - tau) X'w,  0 <= a <= w

with a Frisch-Newton primal-dual interior point iteration and a Mehrotra
predictor-corrector step. The regression coefficients are (minus) the
multipliers of the equality constraints. Once the duality gap is small, the
iterate is snapped to the basic solution through the ``k`` best-fitting
observations whenever that does not increase the objective.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .basis import BasisMatrix
from .errors import InsufficientRows, NonConvergence, RankDeficient, ShapeMismatch
from .linalg import RANK_TOL, as_matrix
from .lsq import (
    CoefficientSet,
    ForecastFrame,
    _check_basis,
    kronecker_rows,
    observed_cells,
    predict_design,
)
from .panel import DesignSet

log = logging.getLogger(__name__)

GAP_TOL = 1e-8
MAX_ITER = 200
STEP_BETA = 0.99995


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValueError(f"quantile level must lie strictly between 0 and 1, got {tau}")
    return tau


def pinball(y: ArrayLike, yhat: ArrayLike, tau: float) -> NDArray[np.float64] | float:
    """Check loss: ``tau*(y-yhat)`` if ``y >= yhat`` else ``(1-tau)*(yhat-y)``."""
    tau = _check_tau(tau)
    diff = np.asarray(y, dtype=np.float64) - np.asarray(yhat, dtype=np.float64)
    out = np.where(diff >= 0, tau * diff, (tau - 1.0) * diff)
    return float(out) if out.ndim == 0 else out


def weighted_pinball(X, y, w, theta, tau) -> float:
    X = np.asarray(X, dtype=np.float64)
    return float(np.sum(np.asarray(w) * pinball(y, X @ np.asarray(theta), tau)))


def _max_step(v: NDArray, dv: NDArray) -> float:
    neg = dv < 0
    if not np.any(neg):
        return 1e20
    return float(np.min(-v[neg] / dv[neg]))


class _NormalSolver:
    """Solves ``(A diag(q) A') dy = rhs`` for the current scaling ``q``."""

    def __init__(self, A: NDArray, q: NDArray):
        self.A = A
        self.q = q
        M = (A * q) @ A.T
        try:
            self.factor = cho_factor(M, lower=False, check_finite=True)
        except (LinAlgError, ValueError):
            self.factor = None
            self.M = M

    def solve(self, rhs: NDArray) -> NDArray:
        if self.factor is not None:
            return cho_solve(self.factor, rhs)
        return np.linalg.lstsq(self.M, rhs, rcond=None)[0]


def _frisch_newton(
    A: NDArray, c: NDArray, u: NDArray, tau: float, tol: float, max_iter: int
) -> tuple[NDArray, int, float]:
    """Minimize ``c'x`` s.t. ``A x = A x0``, ``0 <= x <= u``, from ``x0 = (1-tau) u``.

    ``A`` is ``k x N``. Returns the equality multipliers, the iteration count
    and the final duality gap.
    """
    n = A.shape[1]
    x = (1.0 - tau) * u
    s = u - x
    b = A @ x
    y = np.linalg.lstsq(A.T, c, rcond=None)[0]
    r = c - A.T @ y
    # strictly positive dual slacks keeping z - w = r
    shift = 1e-3 * (np.mean(np.abs(r)) + np.mean(np.abs(c)) / max(n, 1)) + 1e-12
    z = np.maximum(r, 0.0) + shift
    w = np.maximum(-r, 0.0) + shift
    scale = max(1.0, abs(float(c @ x)))
    gap = float(c @ x - b @ y + u @ w)
    it = 0
    while gap > tol * scale:
        if it >= max_iter:
            raise NonConvergence(f"duality gap {gap:.3g} after {it} iterations")
        it += 1
        qd = 1.0 / (z / x + w / s)
        r = z - w
        solver = _NormalSolver(A, qd)

        # affine-scaling (predictor) direction
        dy = solver.solve(A @ (qd * r))
        dx = qd * (A.T @ dy - r)
        ds = -dx
        dz = -z * (dx / x + 1.0)
        dw = -w * (ds / s + 1.0)
        fp = min(STEP_BETA * min(_max_step(x, dx), _max_step(s, ds)), 1.0)
        fd = min(STEP_BETA * min(_max_step(w, dw), _max_step(z, dz)), 1.0)

        if min(fp, fd) < 1.0:
            # Mehrotra corrector with centering
            mu = float(z @ x + w @ s)
            g = float((z + fd * dz) @ (x + fp * dx) + (w + fd * dw) @ (s + fp * ds))
            mu = mu * (g / mu) ** 3 / (2.0 * n)
            dxdz = dx * dz
            dsdw = ds * dw
            xinv = 1.0 / x
            sinv = 1.0 / s
            xi = mu * (xinv - sinv)
            corr = r - xi + dxdz * xinv - dsdw * sinv
            dy = solver.solve(A @ (qd * corr))
            dx = qd * (A.T @ dy - corr)
            ds = -dx
            dz = (mu - dxdz) * xinv - z - z * xinv * dx
            dw = (mu - dsdw) * sinv - w - w * sinv * ds
            fp = min(STEP_BETA * min(_max_step(x, dx), _max_step(s, ds)), 1.0)
            fd = min(STEP_BETA * min(_max_step(w, dw), _max_step(z, dz)), 1.0)

        x = x + fp * dx
        s = s + fp * ds
        y = y + fd * dy
        w = w + fd * dw
        z = z + fd * dz
        scale = max(1.0, abs(float(c @ x)))
        gap = float(c @ x - b @ y + u @ w)
    return y, it, gap


def _select_basis_rows(X: NDArray, order: NDArray, k: int) -> NDArray | None:
    """Greedily pick ``k`` linearly independent rows following ``order``."""
    Q = np.empty((k, X.shape[1]))
    chosen = []
    for i in order:
        v = X[i].copy()
        norm0 = np.linalg.norm(v)
        if norm0 == 0.0:
            continue
        for _ in range(2):
            v -= Q[: len(chosen)].T @ (Q[: len(chosen)] @ v)
        nv = np.linalg.norm(v)
        if nv > 1e-8 * norm0:
            Q[len(chosen)] = v / nv
            chosen.append(i)
            if len(chosen) == k:
                return np.array(chosen)
    return None


def _polish(X, y, w, tau, theta):
    obj = weighted_pinball(X, y, w, theta, tau)
    order = np.argsort(np.abs(y - X @ theta), kind="stable")
    rows = _select_basis_rows(X, order, X.shape[1])
    if rows is None:
        return theta, obj
    try:
        vertex = np.linalg.solve(X[rows], y[rows])
    except np.linalg.LinAlgError:
        return theta, obj
    vobj = weighted_pinball(X, y, w, vertex, tau)
    if vobj <= obj + 1e-12 * max(1.0, abs(obj)):
        return vertex, vobj
    return theta, obj


def solve_weighted_qr(
    X: ArrayLike,
    y: ArrayLike,
    w: ArrayLike | None,
    tau: float,
    tol: float = GAP_TOL,
    max_iter: int = MAX_ITER,
) -> NDArray[np.float64]:
    """Minimize ``sum_i w_i * pinball(y_i, X_i theta, tau)`` over ``theta``.

    Rows with zero weight are dropped first.

    Raises
    ------
    InsufficientRows
        Fewer positively weighted rows than columns.
    RankDeficient
        The positively weighted rows do not have full column rank.
    NonConvergence
        The relative duality gap stays above ``tol`` after ``max_iter``
        iterations.
    """
    tau = _check_tau(tau)
    X = as_matrix(X, "X")
    y = np.asarray(y, dtype=np.float64).ravel()
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=np.float64).ravel()
    if y.shape[0] != X.shape[0] or w.shape != y.shape:
        raise ShapeMismatch("X, y and w must have matching lengths")
    if np.any(w < 0) or not np.all(np.isfinite(w)) or not np.all(np.isfinite(y)):
        raise ValueError("weights must be finite and non-negative; y must be finite")
    keep = w > 0
    X, y, w = X[keep], y[keep], w[keep]
    n, k = X.shape
    if n < k:
        raise InsufficientRows(f"{n} weighted rows for {k} coefficients")
    Rdiag = np.abs(np.diag(np.linalg.qr(X, mode="r")))
    if k and (Rdiag.max() == 0 or Rdiag.min() <= RANK_TOL * Rdiag.max()):
        raise RankDeficient("weighted rows are rank deficient")

    # column scaling keeps the normal matrix well conditioned
    colscale = np.sqrt(np.mean(X**2, axis=0))
    colscale[colscale == 0] = 1.0
    Xs = X / colscale
    dual, it, gap = _frisch_newton(Xs.T, -y, w, tau, tol, max_iter)
    theta = -dual / colscale
    theta, obj = _polish(X, y, w, tau, theta)
    log.debug("quantile solve tau=%g n=%d k=%d: %d iterations, gap %.3g, objective %.6g", tau, n, k, it, gap, obj)
    return theta


def fit_baseline_q(design: DesignSet, tau: float) -> CoefficientSet:
    """Quantile regression per ahead on the rows where that ahead is observed."""
    tau = _check_tau(tau)
    m, q = design.m, design.q
    if design.n_rows == 0:
        raise InsufficientRows("design has no rows")
    B = np.empty((q, m))
    for j in range(q):
        rows = design.W[:, j] != 0
        try:
            B[j] = solve_weighted_qr(design.X[rows], design.Y[rows, j], None, tau)
        except (InsufficientRows, RankDeficient) as exc:
            raise type(exc)(str(exc), ahead=j) from None
        except NonConvergence as exc:
            raise NonConvergence(f"{exc} (ahead index {j})") from None
    return CoefficientSet("baseline", design.column_index, design.aheads, B=B)


def fit_smooth_q(design: DesignSet, basis: BasisMatrix, tau: float) -> CoefficientSet:
    """Smooth quantile fit on the observed rows of ``H kron X``.

    Pinball loss is not rotation invariant, so the expanded matrix is needed
    even when every response is observed.
    """
    tau = _check_tau(tau)
    _check_basis(design, basis)
    d, m = basis.df, design.m
    rows, aheads = observed_cells(design.W)
    if rows.size < d * m:
        raise InsufficientRows(f"{rows.size} observed cells for {d * m} coefficients")
    Xt = kronecker_rows(design.X, basis.H, rows, aheads)
    theta = solve_weighted_qr(Xt, design.Y[rows, aheads], None, tau)
    return CoefficientSet("smooth", design.column_index, design.aheads, Theta=theta.reshape(d, m), basis=basis)


def pinball_objective(coef: CoefficientSet, design: DesignSet, tau: float) -> float:
    """Total pinball loss over the observed cells of ``design``."""
    fit = predict_design(coef, design).values
    return float(np.sum(design.W * pinball(design.Y, fit, tau)))


@dataclass(frozen=True)
class QuantileCoefficientSet:
    levels: tuple[float, ...]
    coefs: tuple[CoefficientSet, ...]

    def __post_init__(self):
        levels = tuple(_check_tau(t) for t in self.levels)
        if list(levels) != sorted(set(levels)):
            raise ValueError("quantile levels must be distinct and sorted")
        if len(levels) != len(self.coefs):
            raise ValueError("one coefficient set is needed per level")
        first = self.coefs[0]
        for c in self.coefs[1:]:
            if c.column_index != first.column_index or c.aheads != first.aheads or c.kind != first.kind:
                raise ValueError("quantile coefficient sets must share columns, aheads and kind")
        object.__setattr__(self, "levels", levels)

    def __getitem__(self, tau: float) -> CoefficientSet:
        for level, coef in zip(self.levels, self.coefs):
            if abs(level - tau) < 1e-12:
                return coef
        raise KeyError(tau)

    def predict(self, design: DesignSet) -> dict[float, ForecastFrame]:
        return {t: predict_design(c, design, quantile=t) for t, c in zip(self.levels, self.coefs)}


def fit_quantiles(
    design: DesignSet, levels: Sequence[float], basis: BasisMatrix | None = None
) -> QuantileCoefficientSet:
    """Fit one model per level; smooth when a basis is given, baseline otherwise."""
    levels = tuple(sorted(float(t) for t in levels))
    coefs = []
    for tau in levels:
        coefs.append(fit_baseline_q(design, tau) if basis is None else fit_smooth_q(design, basis, tau))
    return QuantileCoefficientSet(levels, tuple(coefs))


def crossing_report(frames: dict[float, ForecastFrame]) -> dict[tuple[float, float], int]:
    """Count cells where a lower level's prediction exceeds a higher level's."""
    levels = sorted(frames)
    return {
        (lo, hi): int(np.sum(frames[lo].values > frames[hi].values))
        for lo, hi in zip(levels, levels[1:])
    }
