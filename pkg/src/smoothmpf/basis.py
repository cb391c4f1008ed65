"""Orthonormal polynomial bases over a discrete set of aheads."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import DegreesOfFreedomTooLarge

FAMILIES = ("orthogonal-polynomial",)


@dataclass(frozen=True)
class BasisSpec:
    df: int
    aheads: tuple[float, ...]
    family: str = "orthogonal-polynomial"

    def __post_init__(self):
        object.__setattr__(self, "aheads", tuple(float(a) for a in self.aheads))
        if self.family not in FAMILIES:
            raise ValueError(f"unknown basis family {self.family!r}")
        if int(self.df) != self.df or self.df < 1:
            raise ValueError("degrees of freedom must be a positive integer")
        object.__setattr__(self, "df", int(self.df))
        a = np.asarray(self.aheads)
        if a.size == 0:
            raise ValueError("aheads must be non-empty")
        if np.any(a < 0) or np.any(np.diff(a) <= 0):
            raise ValueError("aheads must be non-negative and strictly increasing")
        if self.df > a.size:
            raise DegreesOfFreedomTooLarge(
                f"df={self.df} exceeds the number of aheads q={a.size}"
            )

    @property
    def q(self) -> int:
        return len(self.aheads)

    def to_dict(self) -> dict:
        return {"family": self.family, "df": self.df, "aheads": list(self.aheads)}

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSpec":
        return cls(df=d["df"], aheads=tuple(d["aheads"]), family=d.get("family", FAMILIES[0]))


@dataclass(frozen=True)
class BasisMatrix:
    spec: BasisSpec
    H: NDArray[np.float64] = field(repr=False)

    @property
    def df(self) -> int:
        return self.spec.df


def _scaled_aheads(aheads: Sequence[float]) -> NDArray[np.float64]:
    a = np.asarray(aheads, dtype=np.float64)
    lo, hi = a[0], a[-1]
    if hi == lo:
        return np.zeros_like(a)
    return 2.0 * (a - lo) / (hi - lo) - 1.0


def _orthonormal_columns(x: NDArray[np.float64], d: int) -> NDArray[np.float64]:
    # Arnoldi-style recurrence: each new candidate is x * (previous column),
    # made orthogonal with two Gram-Schmidt passes. Column j only depends on
    # columns < j, so bases of different sizes nest exactly.
    q = x.size
    H = np.empty((q, d))
    H[:, 0] = 1.0 / np.sqrt(q)
    for j in range(1, d):
        v = x * H[:, j - 1]
        for _ in range(2):
            v = v - H[:, :j] @ (H[:, :j].T @ v)
        norm = np.linalg.norm(v)
        if norm <= 1e-12:
            raise DegreesOfFreedomTooLarge(f"aheads do not support {d} independent polynomials")
        H[:, j] = v / norm
    return H


def _fix_signs(H: NDArray[np.float64]) -> NDArray[np.float64]:
    # entry at the largest ahead is made non-negative; if it is (numerically)
    # zero, the last clearly non-zero entry decides instead
    for j in range(H.shape[1]):
        col = H[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[-1]] < 0:
            H[:, j] = -col
    return H


def build_basis(spec: BasisSpec) -> BasisMatrix:
    """Evaluate ``spec.df`` orthonormal polynomials at the aheads.

    Aheads are mapped affinely onto [-1, 1] first. Column ``j`` spans the
    same space as the monomials up to degree ``j`` and the columns are
    orthonormal with respect to the discrete ahead set. The first column is
    the normalized constant ``1/sqrt(q)``.
    """
    x = _scaled_aheads(spec.aheads)
    H = _fix_signs(_orthonormal_columns(x, spec.df))
    H.setflags(write=False)
    return BasisMatrix(spec=spec, H=H)


def basis_for(aheads: Sequence[float], df: int) -> BasisMatrix:
    return build_basis(BasisSpec(df=df, aheads=tuple(aheads)))
