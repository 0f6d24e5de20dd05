"""Covariate form selection by residualized pre-trends.

Each candidate form is checked with a placebo test on pre-treatment
periods: for a treated group ``s`` with anchor ``a = t_s - 1`` and a period
``t < a`` the placebo effect is the long difference
``lambda[s, t] - lambda[s, a]`` minus the mean of the same difference over
groups still untreated at ``a``. The ``lambda`` are cell levels from the
cell-dummy regression with the form's covariate terms, i.e. cell means of
the outcome net of the covariates. Under parallel trends every placebo
effect is zero; the joint Wald statistic is compared with a chi-square.

The ladder is walked from the most parsimonious form upwards and stops at
the first form whose pre-trends are not rejected at ``alpha``.
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .dataset import CellIndex, PanelDataset, groups_untreated_through
from .design import CovariateForm, residualize
from .errors import DataError, EstimationError
from .estimators.didint import fit_cell_levels
from .svg import line_chart

PLAUSIBLE = "plausible"
IMPLAUSIBLE = "implausible"
UNTESTABLE = "untestable, assumed plausible"
NO_PLAUSIBLE = "No plausible Pre-trends"

COVARIANCES = ("classical", "jackknife")


@dataclass(frozen=True)
class PlaceboCell:
    cell: CellIndex
    anchor: int
    controls: tuple


@dataclass(frozen=True)
class PretrendResult:
    """Joint placebo test for one covariate form.

    Unpacks as ``(statistic, p_value)``.
    """

    form: CovariateForm
    statistic: float
    p_value: float
    df: int
    n_placebo: int
    verdict: str
    placebo: dict = field(default_factory=dict)
    warnings: tuple = ()

    def __iter__(self):
        yield self.statistic
        yield self.p_value

    def to_dict(self) -> dict:
        return {
            "form": self.form.value,
            "statistic": _finite_or_none(self.statistic),
            "p_value": _finite_or_none(self.p_value),
            "df": self.df,
            "n_placebo": self.n_placebo,
            "verdict": self.verdict,
            "warnings": list(self.warnings),
        }


def _finite_or_none(x: float):
    return float(x) if math.isfinite(x) else None


def placebo_cells(data: PanelDataset) -> list[PlaceboCell]:
    """Pre-period cells with at least one control, in group then period order.

    The anchor period itself is excluded since its placebo is zero by
    construction.
    """
    populated = set(data.populated_cells)
    out = []
    for s in data.groups:
        start = data.schedule.start(s)
        if start is None:
            continue
        a = start - 1
        if CellIndex(s, a) not in populated:
            continue
        candidates = groups_untreated_through(data, a, exclude=[s])
        for t in data.periods:
            if t >= a or CellIndex(s, t) not in populated:
                continue
            ctrl = tuple(
                g for g in candidates
                if CellIndex(g, t) in populated and CellIndex(g, a) in populated
            )
            if ctrl:
                out.append(PlaceboCell(CellIndex(s, t), a, ctrl))
    return out


def _contrasts(cells: list[PlaceboCell], labels: tuple) -> np.ndarray:
    pos = {lab: j for j, lab in enumerate(labels)}
    C = np.zeros((len(cells), len(labels)))
    for i, pc in enumerate(cells):
        s, t = pc.cell
        C[i, pos[("cell", s, t)]] += 1.0
        C[i, pos[("cell", s, pc.anchor)]] -= 1.0
        w = 1.0 / len(pc.controls)
        for g in pc.controls:
            C[i, pos[("cell", g, t)]] -= w
            C[i, pos[("cell", g, pc.anchor)]] += w
    return C


def placebo_effects(data: PanelDataset, form) -> tuple[list[PlaceboCell], np.ndarray, np.ndarray]:
    """Placebo effects and their classical covariance under ``form``."""
    cells = placebo_cells(data)
    if not cells:
        return cells, np.zeros(0), np.zeros((0, 0))
    fit, _ = fit_cell_levels(data, form)
    C = _contrasts(cells, fit.labels)
    theta = C @ fit.coef(fit.labels)
    return cells, theta, fit.contrast_covariance(C)


def _jackknife_cov(data: PanelDataset, form, cells: list[PlaceboCell], theta: np.ndarray) -> np.ndarray:
    # Leave one group out; a placebo cell whose treated group is removed
    # keeps its full-sample value for that replicate.
    index = {pc.cell: i for i, pc in enumerate(cells)}
    reps = []
    for g in data.groups:
        try:
            sub = data.drop_group(g)
            sub_cells, sub_theta, _ = placebo_effects(sub, form)
        except (DataError, EstimationError):
            continue
        r = theta.copy()
        for pc, val in zip(sub_cells, sub_theta):
            if pc.cell in index:
                r[index[pc.cell]] = val
        reps.append(r)
    if len(reps) < 2:
        raise EstimationError("too few feasible jackknife replicates")
    R = np.array(reps)
    D = R - R.mean(axis=0)
    return (len(reps) - 1) / len(reps) * D.T @ D


def pretrend_test(
    data: PanelDataset,
    form=CovariateForm.NONE,
    covariance: str = "classical",
    alpha: float = 0.10,
) -> PretrendResult:
    """Joint Wald test that all placebo effects under ``form`` are zero.

    Parameters
    ----------
    covariance : {"classical", "jackknife"}
        Classical OLS covariance of the placebo contrasts, or a
        leave-one-group-out jackknife. With few groups the jackknife
        covariance has rank at most ``G - 1``; the pseudo-inverse is used and
        the degrees of freedom equal its rank.
    alpha : float
        Only used to fill in the verdict.

    Returns
    -------
    PretrendResult
        With verdict ``"untestable, assumed plausible"`` and ``nan``
        statistic when there is no placebo cell.
    """
    form = CovariateForm.parse(form)
    if covariance not in COVARIANCES:
        raise DataError(f"unknown covariance {covariance!r}")
    cells, theta, V = placebo_effects(data, form)
    placebo = {f"{pc.cell.group}:{pc.cell.time}": float(v) for pc, v in zip(cells, theta)}
    if not cells:
        return PretrendResult(
            form, math.nan, math.nan, 0, 0, UNTESTABLE,
            warnings=("fewer than two pre-treatment periods; pre-trends cannot be tested",),
        )
    if covariance == "jackknife":
        V = _jackknife_cov(data, form, cells, theta)
    w, U = np.linalg.eigh((V + V.T) / 2)
    keep = w > w.max() * 1e-10 if w.size and w.max() > 0 else np.zeros(w.shape, bool)
    df = int(keep.sum())
    if df == 0:
        return PretrendResult(
            form, math.nan, math.nan, 0, len(cells), UNTESTABLE, placebo,
            ("placebo covariance is zero; pre-trends cannot be tested",),
        )
    z = U[:, keep].T @ theta
    stat = float(np.sum(z * z / w[keep]))
    p = float(stats.chi2.sf(stat, df))
    verdict = PLAUSIBLE if p > alpha else IMPLAUSIBLE
    return PretrendResult(form, stat, p, df, len(cells), verdict, placebo)


@dataclass(frozen=True)
class SelectionTrace:
    """Ladder steps in evaluation order and the chosen form (if any)."""

    steps: tuple
    chosen: Optional[CovariateForm]
    alpha: float
    warnings: tuple = ()

    @property
    def verdict(self) -> str:
        return self.chosen.value if self.chosen is not None else NO_PLAUSIBLE

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "chosen": None if self.chosen is None else self.chosen.value,
            "verdict": self.verdict,
            "no_plausible_pretrends": self.chosen is None,
            "steps": [s.to_dict() for s in self.steps],
            "warnings": list(self.warnings),
            "note": "plausibility is judged by a placebo Wald test at level alpha",
        }


LADDER = (
    (CovariateForm.NONE,),
    (CovariateForm.HOMOGENEOUS,),
    (CovariateForm.STATE_VARYING, CovariateForm.TIME_VARYING),
    (CovariateForm.TWO_ONE_WAY,),
    (CovariateForm.TWO_WAY,),
)


def select_form(
    data: PanelDataset,
    alpha: float = 0.10,
    include_two_one_way: bool = True,
    covariance: str = "classical",
) -> SelectionTrace:
    """Walk the form ladder and return the first form with plausible pre-trends.

    Both one-way forms are always tested together; if both pass the one
    with the larger p-value is chosen. Without covariates only ``none`` is
    tried. An untestable step counts as plausible.
    """
    if not 0 < alpha < 1:
        raise DataError("alpha must lie in (0, 1)")
    ladder = LADDER if data.K else LADDER[:1]
    steps: list[PretrendResult] = []
    warnings: list[str] = []
    for rung in ladder:
        if rung == (CovariateForm.TWO_ONE_WAY,) and not include_two_one_way:
            continue
        results = []
        for form in rung:
            try:
                res = pretrend_test(data, form, covariance, alpha)
            except EstimationError as exc:
                res = PretrendResult(form, math.nan, math.nan, 0, 0, IMPLAUSIBLE, warnings=(str(exc),))
            results.append(res)
            warnings.extend(f"{form.value}: {w}" for w in res.warnings)
        steps.extend(results)
        passing = [r for r in results if r.verdict != IMPLAUSIBLE]
        if passing:
            best = max(passing, key=lambda r: -1.0 if math.isnan(r.p_value) else r.p_value)
            return SelectionTrace(tuple(steps), best.form, alpha, tuple(warnings))
    warnings.append("no covariate form gives plausible pre-trends")
    return SelectionTrace(tuple(steps), None, alpha, tuple(warnings))


# ----------------------------------------------------------------------
# residual trend tables and figures


@dataclass(frozen=True)
class TrendTable:
    """Mean residualized outcome per populated cell."""

    form: CovariateForm
    rows: tuple  # (group, period, mean_residual, n)

    def series(self) -> dict:
        out: dict = {}
        for g, t, m, _ in self.rows:
            xs, ys = out.setdefault(g, ([], []))
            xs.append(t)
            ys.append(m)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group", "period", "mean_residual", "n", "form"])
        for g, t, m, n in self.rows:
            w.writerow([g, t, repr(float(m)), n, self.form.value])
        return buf.getvalue()


def trend_table(data: PanelDataset, form=CovariateForm.NONE) -> TrendTable:
    """Cell means of the outcome net of the covariate terms of ``form``.

    For ``none`` the raw outcome is used.
    """
    form = CovariateForm.parse(form)
    if form is CovariateForm.NONE or data.K == 0:
        r = data.outcome
    else:
        r = residualize(data, form)
    codes = data.cell_code
    T = len(data.periods)
    sums = np.bincount(codes, weights=r, minlength=len(data.groups) * T)
    counts = np.bincount(codes, minlength=len(data.groups) * T)
    rows = []
    for code in np.flatnonzero(counts):
        g, t = data.groups[code // T], data.periods[code % T]
        rows.append((g, t, float(sums[code] / counts[code]), int(counts[code])))
    return TrendTable(form, tuple(rows))


def trend_svg(data: PanelDataset, table: TrendTable) -> str:
    starts = [s for s in (data.schedule.start(g) for g in data.groups) if s is not None]
    return line_chart(
        table.series(),
        rules=starts,
        title=f"Residualized outcome trends ({table.form.label})",
        xlabel="period",
        ylabel="mean residual",
    )


def export_trends(data: PanelDataset, form, path, stem: Optional[str] = None) -> tuple[str, str]:
    """Write ``<stem>.csv`` and ``<stem>.svg`` under directory ``path``.

    ``stem`` defaults to ``trends_<form>``. Returns the two file paths.

    Raises
    ------
    DataError
        If the directory cannot be created or written.
    """
    form = CovariateForm.parse(form)
    table = trend_table(data, form)
    stem = stem or f"trends_{form.value}"
    try:
        os.makedirs(path, exist_ok=True)
        csv_path = os.path.join(path, f"{stem}.csv")
        svg_path = os.path.join(path, f"{stem}.svg")
        with open(csv_path, "w", newline="") as fh:
            fh.write(table.to_csv())
        with open(svg_path, "w") as fh:
            fh.write(trend_svg(data, table))
    except OSError as exc:
        raise DataError(f"cannot write trend files under {path}: {exc}") from None
    return csv_path, svg_path
