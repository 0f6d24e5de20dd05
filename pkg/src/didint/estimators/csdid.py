"""Cohort-based 2x2 estimator with optional covariate adjustment.

Treated groups that share a first treated period ``g`` form one cohort. For
each cohort and period ``t >= g`` the effect is a 2x2 comparison between the
cohort and the groups not yet treated at ``t``, over periods ``g - 1`` and
``t``. Data are treated as repeated cross-sections: changes are formed from
period means, and fitted values are evaluated at the cohort's period-``t``
covariates.

Adjustments
-----------
none
    difference of cohort and control mean changes.
outcome-regression
    cohort mean change minus the control outcome-regression change
    ``m_t(x) - m_{g-1}(x)``, averaged over the cohort's period-``t`` rows.
ipw
    cohort mean change minus the change in control means reweighted by
    ``P(x) / (1 - P(x))`` (normalized), with ``P`` fitted by logit on
    period-``t`` rows and applied to control rows in both periods.
doubly-robust
    outcome-regression estimate, with the control change corrected by the
    reweighted change in control regression residuals.
"""
from __future__ import annotations

import numpy as np

from ..dataset import CellIndex, PanelDataset, cohorts
from ..errors import DataError, EstimationError
from ..linalg import DesignMatrix, logistic, logit, ols
from .report import AttCell, EstimateReport, aggregate

ADJUSTMENTS = ("none", "outcome-regression", "ipw", "doubly-robust")
TRIM = (0.01, 0.99)


def _parse_adjustment(value: str) -> str:
    key = value.strip().lower()
    key = {"or": "outcome-regression", "dr": "doubly-robust", "unconditional": "none"}.get(key, key)
    if key not in ADJUSTMENTS:
        raise DataError(f"unknown adjustment {value!r}")
    return key


def _regress(X: np.ndarray, y: np.ndarray):
    design = DesignMatrix.from_columns(X, [f"x{j}" for j in range(X.shape[1])])
    fit = ols(design, y, intercept=True)
    b0 = fit.coefficients[("intercept",)]
    b = np.array([fit.coefficients.get(f"x{j}", 0.0) for j in range(X.shape[1])])
    return lambda Z: b0 + Z @ b


def csdid(
    data: PanelDataset,
    adjustment: str = "none",
    weighting: str = "cell-size",
    skip_uncontrolled: bool = False,
) -> EstimateReport:
    """Cohort-by-period effects aggregated with cohort-size weights.

    Cells are labelled by the cohort's member groups joined with ``+``.

    Raises
    ------
    EstimationError
        Empty control set, missing anchor period, or logit separation.
    """
    adjustment = _parse_adjustment(adjustment)
    if adjustment != "none" and data.K == 0:
        raise EstimationError(f"{adjustment} adjustment needs covariates")
    notes: list[str] = []
    trimmed = 0
    cells: list[AttCell] = []
    gidx = data.group_idx
    for g, members in cohorts(data).items():
        anchor = g - 1
        member_pos = [data.groups.index(s) for s in members]
        in_cohort = np.isin(gidx, member_pos)
        if anchor not in data.periods or not np.any(in_cohort & (data.time == anchor)):
            raise EstimationError(f"anchor period {anchor} of cohort {g} has no observations")
        for t in [p for p in data.periods if p >= g]:
            controls = [s for s in data.groups if data.schedule.untreated_at(s, t)]
            ctrl_pos = [data.groups.index(s) for s in controls]
            in_ctrl = np.isin(gidx, ctrl_pos)
            tr_t = np.flatnonzero(in_cohort & (data.time == t))
            tr_a = np.flatnonzero(in_cohort & (data.time == anchor))
            c_t = np.flatnonzero(in_ctrl & (data.time == t))
            c_a = np.flatnonzero(in_ctrl & (data.time == anchor))
            if tr_t.size == 0:
                continue
            if not controls or c_t.size == 0 or c_a.size == 0:
                if skip_uncontrolled:
                    notes.append(f"no valid control for cohort {g} at {t}; skipped")
                    continue
                raise EstimationError(f"no valid control for cohort {g} at {t}")
            y, X = data.outcome, data.covariates
            d_treated = float(y[tr_t].mean() - y[tr_a].mean())
            if adjustment == "none":
                d_ctrl = float(y[c_t].mean() - y[c_a].mean())
            else:
                m_t = _regress(X[c_t], y[c_t])
                m_a = _regress(X[c_a], y[c_a])
                or_change = float(np.mean(m_t(X[tr_t]) - m_a(X[tr_t])))
                if adjustment == "outcome-regression":
                    d_ctrl = or_change
                else:
                    rows = np.concatenate([tr_t, c_t])
                    dvec = np.r_[np.ones(tr_t.size), np.zeros(c_t.size)]
                    try:
                        pfit = logit(X[rows], dvec, intercept=True)
                    except EstimationError as exc:
                        raise type(exc)(f"cohort {g}, period {t}: {exc}") from None
                    coef = pfit.coefficients
                    b0 = coef[("intercept",)]
                    b = np.array([coef.get(f"x{j}", 0.0) for j in range(data.K)])

                    def odds(Z):
                        p = logistic(b0 + Z @ b)
                        clipped = np.clip(p, *TRIM)
                        return clipped / (1.0 - clipped), int(np.sum(clipped != p))

                    w_t, k1 = odds(X[c_t])
                    w_a, k2 = odds(X[c_a])
                    trimmed += k1 + k2
                    w_t = w_t / w_t.sum()
                    w_a = w_a / w_a.sum()
                    if adjustment == "ipw":
                        d_ctrl = float(w_t @ y[c_t] - w_a @ y[c_a])
                    else:
                        r_t = y[c_t] - m_t(X[c_t])
                        r_a = y[c_a] - m_a(X[c_a])
                        d_ctrl = or_change + float(w_t @ r_t - w_a @ r_a)
            cell = CellIndex("+".join(members), t)
            cells.append(
                AttCell(
                    cell,
                    d_treated - d_ctrl,
                    0.0,
                    int(tr_t.size),
                    tuple(controls),
                    d_treated,
                    {"pooled": d_ctrl},
                )
            )
    if not cells:
        raise EstimationError("no treated cohort could be estimated")
    if trimmed:
        notes.append(f"{trimmed} propensity score(s) trimmed to [{TRIM[0]}, {TRIM[1]}]")
    cells, att = aggregate(cells, weighting)
    suffix = {"none": "", "outcome-regression": "-or", "ipw": "-ipw", "doubly-robust": "-dr"}
    return EstimateReport(
        estimator_name="csdid" + suffix[adjustment],
        overall_att=att,
        cells=tuple(cells),
        diagnostics=tuple(notes),
        settings={"adjustment": adjustment, "weighting": weighting, "controls": "not yet treated"},
    )

