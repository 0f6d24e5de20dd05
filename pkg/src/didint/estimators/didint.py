"""Intersection difference-in-differences.

1. Regress the outcome on one dummy per (group, period) cell, without a
   constant, plus the covariate terms of the chosen form.
2. Long-difference the cell coefficients against the period just before
   the group's first treatment: ``diff(s, t) = lambda[s, t] - lambda[s, t_s - 1]``.
3. For each treated cell subtract the average long difference of the groups
   still untreated at ``t`` (taken over the same two periods).
4. Average the cell effects with cell-size or equal weights.
"""
from __future__ import annotations

import math

from ..dataset import CellIndex, PanelDataset, eligible_controls
from ..design import CovariateForm, build_didint_design
from ..errors import EstimationError
from ..linalg import FitResult, ols
from .report import AttCell, EstimateReport, aggregate


def fit_cell_levels(data: PanelDataset, form) -> tuple[FitResult, dict[CellIndex, float]]:
    """Fit the cell-dummy regression and return the per-cell coefficients."""
    design = build_didint_design(data, form)
    fit = ols(design, data.outcome)
    lam = {}
    for c in data.populated_cells:
        lam[c] = fit.coefficients[("cell", c.group, c.time)]
    return fit, lam


def dropped_note(fit: FitResult, limit: int = 5) -> list[str]:
    if not fit.dropped:
        return []
    shown = ", ".join(str(lab) for lab in fit.dropped[:limit])
    more = "" if len(fit.dropped) <= limit else f" and {len(fit.dropped) - limit} more"
    return [f"dropped {len(fit.dropped)} aliased column(s): {shown}{more}"]


def combine_controls(diffs: dict[str, float], sizes: dict[str, int], rule: str) -> float:
    if rule == "equal":
        return math.fsum(diffs.values()) / len(diffs)
    if rule == "size":
        total = sum(sizes[g] for g in diffs)
        return math.fsum(diffs[g] * sizes[g] for g in diffs) / total
    raise ValueError(f"unknown control weighting {rule!r}")


def didint(
    data: PanelDataset,
    form=CovariateForm.NONE,
    weighting: str = "cell-size",
    control_weighting: str = "equal",
    skip_uncontrolled: bool = False,
) -> EstimateReport:
    """Intersection difference-in-differences estimate of the overall ATT.

    Parameters
    ----------
    data : PanelDataset
    form : CovariateForm or str
        Covariate functional form.
    weighting : {"cell-size", "equal"}
        Aggregation weights across treated cells.
    control_weighting : {"equal", "size"}
        How the long differences of several eligible control groups are
        combined: plain mean, or mean weighted by control cell size.
    skip_uncontrolled : bool
        Skip treated cells with no usable control (with a diagnostic)
        instead of raising.

    Raises
    ------
    EstimationError
        No usable control for a treated cell, a missing anchor cell, or no
        treated cell at all.
    """
    form = CovariateForm.parse(form)
    fit, lam = fit_cell_levels(data, form)
    notes = dropped_note(fit)
    counts = data.cell_counts
    cells: list[AttCell] = []
    for s in data.groups:
        start = data.schedule.start(s)
        if start is None:
            continue
        anchor = start - 1
        post = [t for t in data.periods if t >= start]
        if not post:
            continue
        if CellIndex(s, anchor) not in lam:
            raise EstimationError(f"anchor cell ({s}, {anchor}) is not populated")
        for t in post:
            cell = CellIndex(s, t)
            if cell not in lam:
                notes.append(f"treated cell ({s}, {t}) has no observations; skipped")
                continue
            try:
                candidates = sorted(eligible_controls(data, cell), key=data.groups.index)
            except EstimationError:
                candidates = []
            usable = [
                g for g in candidates
                if CellIndex(g, t) in lam and CellIndex(g, anchor) in lam
            ]
            if not usable:
                if skip_uncontrolled:
                    notes.append(f"no valid control for ({s}, {t}); cell skipped")
                    continue
                raise EstimationError(f"no valid control for ({s}, {t})")
            d_treated = lam[cell] - lam[CellIndex(s, anchor)]
            d_controls = {g: lam[CellIndex(g, t)] - lam[CellIndex(g, anchor)] for g in usable}
            sizes = {g: counts[CellIndex(g, t)] for g in usable}
            theta = d_treated - combine_controls(d_controls, sizes, control_weighting)
            cells.append(AttCell(cell, theta, 0.0, counts[cell], tuple(usable), d_treated, d_controls))
    if not cells:
        raise EstimationError("no treated cell could be estimated")
    cells, att = aggregate(cells, weighting)
    return EstimateReport(
        estimator_name=f"didint-{form.value}",
        overall_att=att,
        cells=tuple(cells),
        diagnostics=tuple(notes),
        settings={
            "form": form.value,
            "weighting": weighting,
            "control_weighting": control_weighting,
            "anchor": "period before first treatment",
        },
    )
