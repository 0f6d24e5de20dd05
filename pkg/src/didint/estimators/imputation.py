"""Imputation estimator: fit untreated outcomes, impute, average the gaps."""
from __future__ import annotations

import numpy as np

from ..dataset import CellIndex, PanelDataset
from ..errors import EstimationError
from ..linalg import DesignMatrix, ols
from .didint import dropped_note
from .report import AttCell, EstimateReport, aggregate


def _is_panel(data: PanelDataset) -> bool:
    if data.unit_ids is None:
        return False
    seen: dict[str, int] = {}
    for u, t in zip(data.unit_ids, data.time.tolist()):
        if seen.setdefault(u, t) != t:
            return True
    return False


def imputation(data: PanelDataset, use_units: bool | None = None) -> EstimateReport:
    """Static imputation estimate of the overall ATT.

    Untreated rows fit ``y = unit (or group) effect + period effect + X b``;
    treated rows get ``tau_i = y_i - yhat_i(0)``, averaged with equal weight
    per treated row.

    Parameters
    ----------
    use_units : bool, optional
        Use unit rather than group fixed effects. Defaults to true when unit
        ids repeat across periods (a true panel) and false for repeated
        cross-sections.

    Raises
    ------
    EstimationError
        If a fixed effect needed for a treated row cannot be estimated from
        untreated rows.
    """
    if use_units is None:
        use_units = _is_panel(data)
    D = data.treatment_dummy().astype(bool)
    if not D.any():
        raise EstimationError("no treated observations")
    if D.all():
        raise EstimationError("no untreated observations")
    cols, labels = [], []
    if use_units:
        units = list(dict.fromkeys(data.unit_ids))
        uarr = np.asarray(data.unit_ids, dtype=object)
        for u in units[1:]:
            cols.append((uarr == u).astype(float))
            labels.append(("unit", u))
    else:
        for i, g in enumerate(data.groups[1:], start=1):
            cols.append((data.group_idx == i).astype(float))
            labels.append(("group", g))
    for t in data.periods[1:]:
        cols.append((data.time == t).astype(float))
        labels.append(("time", t))
    cols.append(np.ones(data.n))
    labels.append(("intercept",))
    for k, name in enumerate(data.covariate_names):
        cols.append(data.covariates[:, k])
        labels.append(("cov", name, None, None))
    A = np.column_stack(cols)
    untreated = ~D
    fit = ols(DesignMatrix(A[untreated], tuple(labels)), data.outcome[untreated])
    treated_rows = np.flatnonzero(D)
    for j, lab in enumerate(labels):
        if lab not in fit.coefficients and np.any(A[treated_rows, j] != 0):
            raise EstimationError(f"fixed effect {lab} is not estimable from untreated rows")
    keep = [j for j, lab in enumerate(labels) if lab in fit.coefficients]
    beta = np.array([fit.coefficients[labels[j]] for j in keep])
    tau = data.outcome[treated_rows] - A[np.ix_(treated_rows, keep)] @ beta

    codes = data.cell_code[treated_rows]
    T = len(data.periods)
    cells = []
    for code in np.unique(codes):
        sel = codes == code
        cell = CellIndex(data.groups[code // T], data.periods[code % T])
        cells.append(AttCell(cell, float(np.mean(tau[sel])), 0.0, int(sel.sum())))
    cells, att = aggregate(cells, "cell-size")
    return EstimateReport(
        estimator_name="imputation",
        overall_att=att,
        cells=tuple(cells),
        diagnostics=tuple(dropped_note(fit)),
        settings={"fixed_effects": "unit" if use_units else "group", "weighting": "per treated row"},
    )
