"""Flexible linear model with treated-cell effect dummies."""
from __future__ import annotations

import numpy as np

from ..dataset import CellIndex, PanelDataset
from ..design import build_flex_design, flex_cells
from ..errors import EstimationError
from ..linalg import DesignMatrix, ols
from .didint import dropped_note
from .report import AttCell, EstimateReport, aggregate


def _effects_reduced(data: PanelDataset, design: DesignMatrix):
    """Effect coefficients from the rows without an effect dummy, or ``None``.

    Each effect cell has its own intercept and (centred) covariate slopes,
    so its rows fit exactly and do not inform the remaining coefficients.
    Those are estimated on the other rows; the effect is the cell mean of
    the outcome minus the cell mean of the fitted remainder. ``None`` is
    returned when this shortcut might differ from the full fit: a cell
    whose centred covariates are rank deficient, or a remainder that is not
    estimable at some effect cell.
    """
    labels = design.column_labels
    n_tau = sum(1 for lab in labels if lab[0] == "tau")
    n_head = n_tau * (1 + data.K)
    if any(lab[0] in ("tau", "taux") for lab in labels[n_head:]):
        return None
    A = design.values
    tau_cols = A[:, :n_tau]
    in_tau = tau_cols.any(axis=1)
    rest = A[:, n_head:]
    rest_labels = labels[n_head:]
    rows0 = ~in_tau
    if not rows0.any():
        return None
    means = np.empty((n_tau, rest.shape[1]))
    ybar = np.empty(n_tau)
    for j in range(n_tau):
        r = tau_cols[:, j] != 0
        if data.K:
            Xc = data.covariates[r]
            Xc = Xc - Xc.mean(axis=0)
            sv = np.linalg.svd(Xc, compute_uv=False)
            if sv.size < data.K or sv[-1] <= 1e-10 * max(sv[0], 1.0):
                return None
        means[j] = rest[r].mean(axis=0)
        ybar[j] = data.outcome[r].mean()
    fit = ols(DesignMatrix(rest[rows0], rest_labels), data.outcome[rows0])
    keep = [j for j, lab in enumerate(rest_labels) if lab in fit.coefficients]
    drop = [j for j, lab in enumerate(rest_labels) if lab not in fit.coefficients]
    A0 = rest[rows0]
    if drop:
        # a dropped column must have the same relation to the kept ones at
        # the effect cells as on the fitting rows
        W = np.linalg.lstsq(A0[:, keep], A0[:, drop], rcond=None)[0]
        gap = means[:, drop] - means[:, keep] @ W
        scale = np.abs(means).max() + 1.0
        if np.abs(gap).max() > 1e-8 * scale:
            return None
    beta = fit.coef([rest_labels[j] for j in keep])
    tau = ybar - means[:, keep] @ beta
    coefs = {labels[j]: float(tau[j]) for j in range(n_tau)}
    return coefs, dropped_note(fit)


def flex(
    data: PanelDataset,
    leads: bool = False,
    weighting: str = "cell-size",
    method: str = "auto",
) -> EstimateReport:
    """Regression-based effects for every treated post-period cell.

    With ``leads`` every period of a treated group has an effect dummy and
    post-period effects are reported relative to the period before first
    treatment.

    Parameters
    ----------
    method : {"auto", "dense"}
        ``"auto"`` fits the non-effect coefficients on the rows without an
        effect dummy when that is provably identical to the full fit;
        ``"dense"`` always fits the full design.

    Raises
    ------
    EstimationError
        If an effect dummy needed for a post-period cell is aliased.
    """
    design = build_flex_design(data, leads)
    reduced = _effects_reduced(data, design) if method == "auto" else None
    if reduced is not None:
        coefficients, notes = reduced
    else:
        fit = ols(design, data.outcome)
        coefficients, notes = fit.coefficients, dropped_note(fit)
    counts = data.cell_counts
    cells = []
    for c in flex_cells(data, leads):
        start = data.schedule.start(c.group)
        if c.time < start:
            continue
        label = ("tau", c.group, c.time)
        if label not in coefficients:
            raise EstimationError(f"effect dummy for ({c.group}, {c.time}) is aliased")
        theta = coefficients[label]
        if leads:
            ref = ("tau", c.group, start - 1)
            if ref not in coefficients:
                raise EstimationError(f"reference cell ({c.group}, {start - 1}) is unavailable")
            theta -= coefficients[ref]
        cells.append(AttCell(CellIndex(c.group, c.time), theta, 0.0, counts[c]))
    if not cells:
        raise EstimationError("no treated post-period cell")
    cells, att = aggregate(cells, weighting)
    return EstimateReport(
        estimator_name="flex",
        overall_att=att,
        cells=tuple(cells),
        diagnostics=tuple(notes),
        settings={"leads": leads, "weighting": weighting},
    )
