"""Result containers shared by all estimators."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Optional

from ..dataset import CellIndex


@dataclass(frozen=True)
class AttCell:
    """One cell-level effect estimate.

    ``theta = diff_treated - combination(diff_controls)``; estimators that
    do not work with explicit differences (regression coefficients) leave
    the difference fields at ``nan`` / empty.
    """

    cell: CellIndex
    theta: float
    weight: float
    n_treated: int
    control_groups: tuple[str, ...] = ()
    diff_treated: float = math.nan
    diff_controls: dict = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "group": self.cell.group,
            "time": self.cell.time,
            "theta": _num(self.theta),
            "weight": _num(self.weight),
            "n_treated": self.n_treated,
            "control_groups": list(self.control_groups),
            "diff_treated": _num(self.diff_treated),
            "diff_controls": {g: _num(v) for g, v in self.diff_controls.items()},
        }


def _num(x: Optional[float]):
    if x is None:
        return None
    x = float(x)
    return None if math.isnan(x) else x


@dataclass(frozen=True)
class EstimateReport:
    """Overall effect estimate with its cell table and diagnostics."""

    estimator_name: str
    overall_att: float
    cells: tuple[AttCell, ...] = ()
    se: Optional[float] = None
    p_randomization: Optional[float] = None
    diagnostics: tuple[str, ...] = ()
    settings: dict = field(default_factory=dict)
    inference: dict = field(default_factory=dict)

    def with_inference(self, **kw) -> "EstimateReport":
        return replace(self, **kw)

    def to_dict(self) -> dict[str, Any]:
        return {
            "estimator_name": self.estimator_name,
            "overall_att": _num(self.overall_att),
            "se": _num(self.se),
            "p_randomization": _num(self.p_randomization),
            "diagnostics": list(self.diagnostics),
            "settings": self.settings,
            "inference": self.inference,
            "cells": [c.to_dict() for c in self.cells],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def cells_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group", "time", "theta", "weight", "n_treated", "diff_treated", "control_groups"])
        for c in self.cells:
            w.writerow([
                c.cell.group,
                c.cell.time,
                repr(float(c.theta)),
                repr(float(c.weight)),
                c.n_treated,
                "" if math.isnan(c.diff_treated) else repr(float(c.diff_treated)),
                ";".join(c.control_groups),
            ])
        return buf.getvalue()


def aggregate(cells: list[AttCell], weighting: str = "cell-size") -> tuple[list[AttCell], float]:
    """Attach normalized weights and return ``(cells, sum weight * theta)``.

    ``weighting`` is ``"cell-size"`` (proportional to ``n_treated``) or
    ``"equal"``.
    """
    if not cells:
        return [], math.nan
    if weighting == "cell-size":
        raw = [float(c.n_treated) for c in cells]
    elif weighting == "equal":
        raw = [1.0] * len(cells)
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    total = math.fsum(raw)
    out = [replace(c, weight=r / total) for c, r in zip(cells, raw)]
    att = math.fsum(c.weight * c.theta for c in out)
    return out, att
