"""Two-way fixed effects regressions and the 2x2 subsample comparisons."""
from __future__ import annotations

import numpy as np

from ..dataset import PanelDataset
from ..design import CovariateForm, build_twfe_design
from ..errors import DataError, EstimationError
from ..linalg import DesignMatrix, ols
from .didint import dropped_note
from .report import EstimateReport


def _cell_reduction(data: PanelDataset):
    """Per-cell weights ``a_c = 1'(I - P_Xc)1`` and levels ``1'(I - P_Xc)y / a_c``.

    Returns ``None`` when some ``a_c`` vanishes (a covariate is constant
    within a cell), in which case the reduction does not reproduce the full
    regression's column dropping. Also returns the number of covariate
    columns aliased inside cells.
    """
    order = np.argsort(data.cell_code, kind="stable")
    codes = data.cell_code[order]
    bounds = np.flatnonzero(np.r_[True, codes[1:] != codes[:-1], True])
    X = data.covariates[order]
    y = data.outcome[order]
    cells, weights, levels = [], [], []
    aliased = 0
    for a, b in zip(bounds[:-1], bounds[1:]):
        ones = np.ones(b - a)
        yc = y[a:b]
        if data.K:
            Xc = X[a:b]
            coef, _, rank, _ = np.linalg.lstsq(Xc, np.column_stack([ones, yc]), rcond=None)
            aliased += data.K - int(rank)
            e = ones - Xc @ coef[:, 0]
        else:
            e = ones
        w = float(e @ e)
        if w <= 1e-8 * (b - a):
            return None, 0
        cells.append(int(codes[a]))
        weights.append(w)
        levels.append(float(e @ yc) / w)
    return (np.array(cells), np.array(weights), np.array(levels)), aliased


def _twfe_two_way_reduced(data: PanelDataset):
    """Treatment coefficient of the two-way interacted regression, or ``None``.

    Profiling out the cell-specific covariate slopes leaves a weighted
    regression of the covariate-adjusted cell levels on the group and period
    dummies, constant and treatment dummy, with weights ``a_c``. The result
    equals the full regression whenever every ``a_c`` is positive.
    """
    red, aliased = _cell_reduction(data)
    if red is None:
        return None
    cells, w, lam = red
    T = len(data.periods)
    gi, ti = cells // T, cells % T
    cols = [(gi == i).astype(float) for i in range(1, len(data.groups))]
    cols += [(ti == j).astype(float) for j in range(1, T)]
    starts = np.array([np.inf if s is None else s for s in (data.schedule.start(g) for g in data.groups)])
    periods = np.asarray(data.periods)
    D = (periods[ti] >= starts[gi]).astype(float)
    cols += [np.ones(cells.size), D]
    labels = [("group", g) for g in data.groups[1:]] + [("time", t) for t in data.periods[1:]]
    labels += [("intercept",), ("D",)]
    sw = np.sqrt(w)
    fit = ols(DesignMatrix(np.column_stack(cols) * sw[:, None], tuple(labels)), lam * sw)
    notes = dropped_note(fit)
    if aliased:
        notes.append(f"dropped {aliased} aliased covariate column(s) within cells")
    return fit, notes


def twfe(
    data: PanelDataset,
    interacted: bool = False,
    form=CovariateForm.TWO_WAY,
    method: str = "auto",
) -> EstimateReport:
    """Coefficient on the treatment dummy in a two-way fixed effects regression.

    With ``interacted`` the covariates are expanded by ``form`` (two-way by
    default, i.e. one slope per group and period).

    Parameters
    ----------
    method : {"auto", "dense"}
        With the two-way expansion, ``"auto"`` solves the equivalent
        cell-level weighted regression; ``"dense"`` always fits the full
        design.

    Raises
    ------
    EstimationError
        If the treatment dummy is aliased with the fixed effects.
    """
    form = CovariateForm.parse(form)
    reduced = None
    if interacted and form is CovariateForm.TWO_WAY and method == "auto":
        reduced = _twfe_two_way_reduced(data)
    if reduced is not None:
        fit, notes = reduced
    else:
        design = build_twfe_design(data, interacted, form)
        fit = ols(design, data.outcome)
        notes = dropped_note(fit)
    if ("D",) not in fit.coefficients:
        raise EstimationError("treatment dummy is aliased with the fixed effects")
    name = "twfe-mod" if interacted else "twfe"
    return EstimateReport(
        estimator_name=name,
        overall_att=fit.coefficients[("D",)],
        diagnostics=tuple(notes),
        settings={"interacted": interacted, "form": form.value if interacted else "homogeneous"},
    )


BACON_COMPARISONS = ("eU_21", "lU_32", "el_21", "le_32")


def bacon_2x2(data: PanelDataset, interacted: bool = False) -> list[tuple[str, float]]:
    """TWFE on the four 2x2 subsamples of a three-group, three-period design.

    The layout must have an early group treated in the second period, a
    late group treated in the third, and a never-treated group. The
    comparisons are: early vs never (periods 1-2), late vs never (2-3),
    early vs late (1-2, late still untreated) and late vs early (2-3, the
    already-treated early group as control).

    Raises
    ------
    DataError
        If the data do not have that layout.
    """
    if len(data.periods) != 3 or len(data.groups) != 3:
        raise DataError("bacon_2x2 needs exactly three groups and three periods")
    p1, p2, p3 = data.periods
    role = {}
    for g in data.groups:
        start = data.schedule.start(g)
        if start is None:
            role["u"] = g
        elif start == p2:
            role["e"] = g
        elif start == p3:
            role["l"] = g
    if set(role) != {"e", "l", "u"}:
        raise DataError("bacon_2x2 needs groups treated in periods 2 and 3 and one never treated")

    def sub(groups, periods, schedule):
        rows = np.isin(data.group_labels, groups) & np.isin(data.time, periods)
        return PanelDataset.from_arrays(
            data.group_labels[rows],
            data.time[rows],
            data.outcome[rows],
            {g: schedule.get(g) for g in groups},
            covariates=data.covariates[rows],
            covariate_names=data.covariate_names,
            groups_order=groups,
        )

    e, l, u = role["e"], role["l"], role["u"]
    # In the late-vs-early block the early group is treated in both periods;
    # its constant treatment status is absorbed by its group dummy, so it
    # enters as an untreated control.
    samples = {
        "eU_21": sub([e, u], [p1, p2], {e: p2}),
        "lU_32": sub([l, u], [p2, p3], {l: p3}),
        "el_21": sub([e, l], [p1, p2], {e: p2}),
        "le_32": sub([l, e], [p2, p3], {l: p3}),
    }
    return [(name, twfe(samples[name], interacted).overall_att) for name in BACON_COMPARISONS]
