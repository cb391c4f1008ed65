"""JSON model artifact (format version 1).

Matrices are stored row-major as ``{"rows": r, "cols": c, "data": [[...], ...]}``.
Floats are written with ``repr`` precision so a save/load round trip is
bit-exact. Layout::

    {
      "format_version": 1,
      "task": {...},                # TaskSpec.to_dict()
      "dates": false,               # whether times print as ISO dates
      "kind": "baseline" | "smooth",
      "basis": {"family", "df", "aheads", "H"} | null,
      "coefficients": {"B": matrix} | {"Theta": matrix} | null,
      "quantiles": [{"tau": 0.2, "B" | "Theta": matrix}, ...] | null,
      "margins": {...} | null,
      "metadata": {...}
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .basis import BasisMatrix, BasisSpec
from .calibration import CalibrationMargins
from .errors import DataError
from .lsq import CoefficientSet
from .panel import TaskSpec
from .quantile import QuantileCoefficientSet

FORMAT_VERSION = 1


@dataclass
class ModelArtifact:
    task: TaskSpec
    kind: str
    coef: CoefficientSet | None = None
    quantiles: QuantileCoefficientSet | None = None
    margins: CalibrationMargins | None = None
    dates: bool = False
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if (self.coef is None) == (self.quantiles is None):
            raise ValueError("an artifact holds either point coefficients or quantile coefficients")
        first = self.coef if self.coef is not None else self.quantiles.coefs[0]
        if first.kind != self.kind:
            raise ValueError("artifact kind does not match its coefficients")
        if tuple(first.column_index) != tuple(self.task.column_index) or tuple(first.aheads) != self.task.aheads:
            raise ValueError("coefficients do not match the task's columns or aheads")

    @property
    def basis(self) -> BasisMatrix | None:
        first = self.coef if self.coef is not None else self.quantiles.coefs[0]
        return first.basis

    @property
    def levels(self) -> tuple[float, ...]:
        return () if self.quantiles is None else self.quantiles.levels


def _matrix_out(a: np.ndarray) -> dict:
    return {"rows": int(a.shape[0]), "cols": int(a.shape[1]), "data": [[float(v) for v in row] for row in a]}


def _matrix_in(d: dict) -> np.ndarray:
    a = np.array(d["data"], dtype=np.float64).reshape(d["rows"], d["cols"])
    return a


def _payload(coef: CoefficientSet) -> dict:
    if coef.kind == "baseline":
        return {"B": _matrix_out(coef.B)}
    return {"Theta": _matrix_out(coef.Theta)}


def to_dict(art: ModelArtifact) -> dict:
    basis = art.basis
    out: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "task": art.task.to_dict(art.dates),
        "dates": art.dates,
        "kind": art.kind,
        "basis": None if basis is None else {**basis.spec.to_dict(), "H": _matrix_out(np.asarray(basis.H))},
        "coefficients": None if art.coef is None else _payload(art.coef),
        "quantiles": None
        if art.quantiles is None
        else [{"tau": t, **_payload(c)} for t, c in zip(art.quantiles.levels, art.quantiles.coefs)],
        "margins": None if art.margins is None else art.margins.to_dict(),
        "metadata": art.metadata,
    }
    return out


def from_dict(d: dict) -> ModelArtifact:
    if d.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported artifact format_version {d.get('format_version')!r}")
    try:
        task = TaskSpec.from_dict(d["task"])
        kind = d["kind"]
        basis = None
        if d.get("basis") is not None:
            b = d["basis"]
            H = _matrix_in(b["H"])
            H.setflags(write=False)
            basis = BasisMatrix(BasisSpec.from_dict(b), H)
        cols, aheads = tuple(task.column_index), task.aheads

        def coef_from(p: dict) -> CoefficientSet:
            if kind == "baseline":
                return CoefficientSet("baseline", cols, aheads, B=_matrix_in(p["B"]))
            return CoefficientSet("smooth", cols, aheads, Theta=_matrix_in(p["Theta"]), basis=basis)

        coef = None if d.get("coefficients") is None else coef_from(d["coefficients"])
        quantiles = None
        if d.get("quantiles") is not None:
            qs = d["quantiles"]
            quantiles = QuantileCoefficientSet(tuple(float(x["tau"]) for x in qs), tuple(coef_from(x) for x in qs))
        margins = None if d.get("margins") is None else CalibrationMargins.from_dict(d["margins"])
        return ModelArtifact(
            task=task,
            kind=kind,
            coef=coef,
            quantiles=quantiles,
            margins=margins,
            dates=bool(d.get("dates", False)),
            metadata=dict(d.get("metadata", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model artifact: {exc}") from exc


def dumps(art: ModelArtifact) -> str:
    return json.dumps(to_dict(art), indent=1) + "\n"


def save_artifact(path: str | Path, art: ModelArtifact) -> None:
    Path(path).write_text(dumps(art), encoding="utf-8")


def load_artifact(path: str | Path) -> ModelArtifact:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from exc
    return from_dict(d)
