"""Dense linear-algebra kernels used by the fitting code.

Matrices are plain 2-D ``float64`` numpy arrays. Least squares goes through a
Householder QR of the design rather than the normal equations.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import solve_triangular

from .errors import RankDeficient, ShapeMismatch

RANK_TOL = 1e-10


def as_matrix(a: ArrayLike, name: str = "matrix") -> NDArray[np.float64]:
    """Coerce to a finite 2-D float64 array (vectors become one column)."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def _check_rank(R: NDArray[np.float64], tol: float = RANK_TOL) -> None:
    diag = np.abs(np.diag(R))
    if diag.size == 0:
        return
    top = diag.max()
    if top == 0.0 or diag.min() <= tol * top:
        rank = int(np.sum(diag > tol * top)) if top > 0 else 0
        raise RankDeficient(f"column rank {rank} < {diag.size} within tolerance {tol:g}")


def solve_least_squares(X: ArrayLike, Y: ArrayLike) -> NDArray[np.float64]:
    """Return ``C`` minimizing ``||Y - X C||_F``.

    ``Y`` may be a vector, in which case a vector is returned.

    Raises
    ------
    ShapeMismatch
        If ``X`` and ``Y`` have different row counts.
    RankDeficient
        If ``X`` has fewer rows than columns or its QR factor has a diagonal
        entry at or below ``1e-10`` times the largest one.
    """
    Xm = as_matrix(X, "X")
    y_is_vector = np.ndim(Y) == 1
    Ym = as_matrix(Y, "Y")
    n, m = Xm.shape
    if Ym.shape[0] != n:
        raise ShapeMismatch(f"X has {n} rows but Y has {Ym.shape[0]}")
    if n < m:
        raise RankDeficient(f"{n} rows cannot determine {m} coefficients")
    Q, R = np.linalg.qr(Xm, mode="reduced")
    _check_rank(R)
    C = solve_triangular(R, Q.T @ Ym, lower=False)
    return C[:, 0] if y_is_vector else C


def qr_orthonormalize(H: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Thin QR ``H = Q R`` with the diagonal of ``R`` made positive."""
    Hm = as_matrix(H, "H")
    q, d = Hm.shape
    if d > q:
        raise RankDeficient(f"{d} columns exceed {q} rows")
    Q, R = np.linalg.qr(Hm, mode="reduced")
    _check_rank(R)
    signs = np.sign(np.diag(R))
    Q = Q * signs
    R = R * signs[:, None]
    return Q, R


def kronecker(A: ArrayLike, B: ArrayLike) -> NDArray[np.float64]:
    return np.kron(as_matrix(A, "A"), as_matrix(B, "B"))


def hadamard(A: ArrayLike, B: ArrayLike) -> NDArray[np.float64]:
    Am, Bm = as_matrix(A, "A"), as_matrix(B, "B")
    if Am.shape != Bm.shape:
        raise ShapeMismatch(f"shapes differ: {Am.shape} vs {Bm.shape}")
    return Am * Bm


def vec(A: ArrayLike) -> NDArray[np.float64]:
    """Stack the columns of ``A`` into one vector."""
    return np.asarray(A, dtype=np.float64).reshape(-1, order="F")


def unvec(v: ArrayLike, rows: int, cols: int) -> NDArray[np.float64]:
    return np.asarray(v, dtype=np.float64).reshape((rows, cols), order="F")
