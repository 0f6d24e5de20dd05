"""Design matrices for the cell-dummy regression and the comparison estimators.

Column labels are tuples:

``("cell", g, t)``
    intersection dummy for group ``g`` in period ``t``
``("cov", name, g, t)``
    covariate ``name`` interacted with group ``g`` and/or period ``t``;
    ``None`` in a scope slot means "all"
``("group", g)``, ``("time", t)``, ``("intercept",)``, ``("D",)``
    fixed effects, constant and treatment dummy
``("tau", g, t)``, ``("taux", name, g, t)``
    treated-cell effect dummies and their covariate interactions (FLEX)
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataset import CellIndex, PanelDataset
from .errors import DataError, EstimationError
from .linalg import DesignMatrix, Partition, ols


class CovariateForm(enum.Enum):
    """How covariate slopes are allowed to vary across groups and periods."""

    NONE = "none"
    HOMOGENEOUS = "homogeneous"
    STATE_VARYING = "state-varying"
    TIME_VARYING = "time-varying"
    TWO_WAY = "two-way"
    TWO_ONE_WAY = "two-one-way"

    @classmethod
    def parse(cls, value) -> "CovariateForm":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {
            "state": "state-varying",
            "time": "time-varying",
            "twoway": "two-way",
            "twooneway": "two-one-way",
            "two-oneway": "two-one-way",
        }
        key = aliases.get(key, key)
        for member in cls:
            if member.value == key:
                return member
        raise DataError(f"unknown covariate form {value!r}")

    @property
    def label(self) -> str:
        return self.value


Term = tuple[str, Optional[str], Optional[int]]


@dataclass(frozen=True)
class ExpansionPlan:
    """Column recipe: dummies plus (covariate, group scope, period scope) terms."""

    intersection_dummies: tuple[CellIndex, ...] = ()
    group_dummies: tuple[str, ...] = ()
    time_dummies: tuple[int, ...] = ()
    covariate_terms: tuple[Term, ...] = ()


def covariate_terms(data: PanelDataset, form: CovariateForm) -> tuple[Term, ...]:
    """Covariate terms for ``form``, grouped by covariate."""
    form = CovariateForm.parse(form)
    out: list[Term] = []
    for name in data.covariate_names:
        if form is CovariateForm.NONE:
            continue
        if form is CovariateForm.HOMOGENEOUS:
            out.append((name, None, None))
        if form in (CovariateForm.STATE_VARYING, CovariateForm.TWO_ONE_WAY):
            out.extend((name, g, None) for g in data.groups)
        if form in (CovariateForm.TIME_VARYING, CovariateForm.TWO_ONE_WAY):
            out.extend((name, None, t) for t in data.periods)
        if form is CovariateForm.TWO_WAY:
            out.extend((name, c.group, c.time) for c in data.populated_cells)
    return tuple(out)


def expansion_plan(data: PanelDataset, form: CovariateForm) -> ExpansionPlan:
    return ExpansionPlan(
        intersection_dummies=data.populated_cells,
        covariate_terms=covariate_terms(data, form),
    )


def _term_rows(data: PanelDataset) -> dict:
    """Row indices by group, by period and by cell, for building term columns."""
    gi, ti = data.group_idx, data.period_idx
    T = len(data.periods)
    out: dict = {}
    for key, codes, labels in (
        ("g", gi, data.groups),
        ("t", ti, data.periods),
    ):
        order = np.argsort(codes, kind="stable")
        bounds = np.searchsorted(codes[order], np.arange(len(labels) + 1))
        out[key] = {lab: order[bounds[i]:bounds[i + 1]] for i, lab in enumerate(labels)}
    codes = data.cell_code
    order = np.argsort(codes, kind="stable")
    bounds = np.searchsorted(codes[order], np.arange(len(data.groups) * T + 1))
    out["c"] = {
        (data.groups[c // T], data.periods[c % T]): order[bounds[c]:bounds[c + 1]]
        for c in range(len(data.groups) * T)
        if bounds[c + 1] > bounds[c]
    }
    return out


def _term_columns(data: PanelDataset, terms, center_cells: bool = False) -> np.ndarray:
    n = data.n
    out = np.zeros((n, len(terms)))
    if not terms:
        return out
    kidx = {name: k for k, name in enumerate(data.covariate_names)}
    rows_by = _term_rows(data)
    empty = np.zeros(0, dtype=np.int64)
    for j, (name, g, t) in enumerate(terms):
        k = kidx[name]
        if g is not None and t is not None:
            rows = rows_by["c"].get((g, t), empty)
        elif g is not None:
            rows = rows_by["g"][g]
        elif t is not None:
            rows = rows_by["t"][t]
        else:
            out[:, j] = data.covariates[:, k]
            continue
        x = data.covariates[rows, k]
        if center_cells and x.size:
            x = x - x.mean()
        out[rows, j] = x
    return out


def _constant_within_cells(data: PanelDataset, values: np.ndarray) -> np.ndarray:
    """For each column of ``values``, whether it is constant inside every cell."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    order = np.argsort(data.cell_code, kind="stable")
    codes = data.cell_code[order]
    starts = np.flatnonzero(np.r_[True, codes[1:] != codes[:-1]])
    v = values[order]
    hi = np.maximum.reduceat(v, starts, axis=0)
    lo = np.minimum.reduceat(v, starts, axis=0)
    return np.all(hi == lo, axis=0)


def _cell_of_code(data: PanelDataset, code: int) -> CellIndex:
    T = len(data.periods)
    return CellIndex(data.groups[code // T], data.periods[code % T])


def cell_partition(data: PanelDataset) -> Partition:
    """Intersection dummies as a partition block, one column per populated cell."""
    codes_all = data.cell_code
    present = np.unique(codes_all)
    lookup = np.full(len(data.groups) * len(data.periods), -1, dtype=np.int64)
    lookup[present] = np.arange(present.size)
    labels = tuple(("cell", c.group, c.time) for c in data.populated_cells)
    return Partition(lookup[codes_all], labels)


def build_didint_design(data: PanelDataset, form: CovariateForm) -> DesignMatrix:
    """Cell dummies (no constant) followed by the covariate terms of ``form``.

    Under the two-way form, covariate interactions that are constant within
    their cell duplicate the cell dummy; they are listed in ``aliasable``
    and left to the solver.
    """
    form = CovariateForm.parse(form)
    part = cell_partition(data)
    terms = covariate_terms(data, form)
    values = _term_columns(data, terms)
    labels = part.labels + tuple(("cov",) + term for term in terms)
    aliasable = frozenset()
    if form is CovariateForm.TWO_WAY and terms:
        const = _constant_within_cells(data, values)
        aliasable = frozenset(labels[len(part.labels) + j] for j in np.flatnonzero(const))
    return DesignMatrix(values, labels, partition=part, aliasable=aliasable)


def _fixed_effects(data: PanelDataset, omit_first: bool):
    cols, labels = [], []
    gs = data.groups[1:] if omit_first else data.groups
    for g in gs:
        cols.append((data.group_idx == data.groups.index(g)).astype(float))
        labels.append(("group", g))
    ts = data.periods[1:] if omit_first else data.periods
    times = []
    for t in ts:
        times.append((data.time == t).astype(float))
    return cols, labels, times, [("time", t) for t in ts]


def build_twfe_design(
    data: PanelDataset,
    interacted: bool,
    form: CovariateForm = CovariateForm.TWO_WAY,
) -> DesignMatrix:
    """Group dummies, period dummies (first of each omitted), constant, ``D``, covariates.

    Covariates enter once each when ``interacted`` is false and with the
    ``form`` expansion (two-way by default) otherwise.
    """
    gcols, glabels, tcols, tlabels = _fixed_effects(data, omit_first=True)
    cols = gcols + tcols + [np.ones(data.n), data.treatment_dummy()]
    labels = glabels + tlabels + [("intercept",), ("D",)]
    if interacted:
        terms = covariate_terms(data, form)
    else:
        terms = covariate_terms(data, CovariateForm.HOMOGENEOUS)
    block = _term_columns(data, terms)
    values = np.column_stack(cols + [block]) if terms else np.column_stack(cols)
    labels += [("cov",) + term for term in terms]
    return DesignMatrix(values, tuple(labels))


def flex_cells(data: PanelDataset, leads: bool) -> list[CellIndex]:
    """Populated cells of treated groups that get an effect dummy."""
    out = []
    for c in data.populated_cells:
        start = data.schedule.start(c.group)
        if start is None:
            continue
        if leads or c.time >= start:
            out.append(c)
    return out


def build_flex_design(data: PanelDataset, leads: bool) -> DesignMatrix:
    """Treated-cell effect dummies plus layered covariate interactions.

    Column blocks, in order: effect dummies ``tau`` for treated groups (post
    periods, or every period with ``leads``); the covariates interacted with
    those same cells and centred at the cell mean, so each ``tau`` is the
    effect at the cell's average covariate value; covariates interacted with
    every group; with every period; plain covariates; all period dummies;
    all group dummies; the constant. Redundant columns are resolved by the
    solver.

    Raises
    ------
    EstimationError
        If no group is ever treated within the sample.
    """
    cells = [c for c in flex_cells(data, leads) if data.schedule.start(c.group) <= data.periods[-1]]
    if not data.schedule.treated_groups or not any(
        data.schedule.start(c.group) <= c.time for c in cells
    ):
        raise EstimationError("FLEX needs at least one treated group with a post period")
    cols: list[np.ndarray] = []
    labels: list[tuple] = []
    for c in cells:
        cols.append(((data.group_idx == data.groups.index(c.group)) & (data.time == c.time)).astype(float))
        labels.append(("tau", c.group, c.time))
    taux_terms = [(name, c.group, c.time) for name in data.covariate_names for c in cells]
    if taux_terms:
        block = _term_columns(data, taux_terms, center_cells=True)
        cols.extend(block.T)
        labels.extend(("taux",) + term for term in taux_terms)
    terms = []
    for name in data.covariate_names:
        terms.extend((name, g, None) for g in data.groups)
    for name in data.covariate_names:
        terms.extend((name, None, t) for t in data.periods)
    terms.extend((name, None, None) for name in data.covariate_names)
    if terms:
        cols.extend(_term_columns(data, terms).T)
        labels.extend(("cov",) + term for term in terms)
    gcols, glabels, tcols, tlabels = _fixed_effects(data, omit_first=False)
    cols.extend(tcols)
    labels.extend(tlabels)
    cols.extend(gcols)
    labels.extend(glabels)
    cols.append(np.ones(data.n))
    labels.append(("intercept",))
    return DesignMatrix(np.column_stack(cols), tuple(labels))


def residualize(
    data: PanelDataset,
    form: CovariateForm,
    absorb_cells: bool = True,
) -> np.ndarray:
    """Outcome net of the covariate terms of ``form``, one value per row.

    With ``absorb_cells`` (default) the covariate slopes are estimated with
    the cell dummies in the regression, so they are not contaminated by
    differences in cell levels; the residual is ``y`` minus the fitted
    covariate part, centred at its grand mean. With ``absorb_cells=False``
    the outcome is regressed on a constant and the covariate terms only,
    and ordinary residuals are returned.

    Raises
    ------
    DataError
        If ``form`` is ``none``.
    EstimationError
        If the covariate columns are nonzero but every one is aliased.
        All-zero covariates are not an error: the result is the outcome
        minus its mean.
    """
    form = CovariateForm.parse(form)
    if form is CovariateForm.NONE:
        raise DataError("residualize needs a covariate form other than none")
    terms = covariate_terms(data, form)
    if not terms:
        raise EstimationError("no covariates to residualize on")
    values = _term_columns(data, terms)
    if not np.any(values):
        # nothing to partial out
        return data.outcome - data.outcome.mean()
    if absorb_cells:
        design = build_didint_design(data, form)
        fit = ols(design, data.outcome)
        m = len(design.partition.labels)
        cov_labels = design.column_labels[m:]
        kept = [j for j, lab in enumerate(cov_labels) if lab in fit.coefficients]
        if not kept:
            raise EstimationError("all covariate columns are aliased with the cell dummies")
        beta = np.array([fit.coefficients[cov_labels[j]] for j in kept])
        r = data.outcome - design.values[:, kept] @ beta
        return r - r.mean()
    design = DesignMatrix(values, tuple(("cov",) + t for t in terms))
    fit = ols(design, data.outcome, intercept=True)
    if set(fit.coefficients) == {("intercept",)}:
        raise EstimationError("all covariate columns are aliased")
    return fit.residuals
