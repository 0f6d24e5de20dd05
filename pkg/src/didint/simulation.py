"""Synthetic data-generating processes, calibration and the Monte Carlo engine.

Outcomes follow

    y = y_init[s] + slope[s] * (t - t0) + sum_k gamma[k, s, t] * x_k + tau * D + e

with one ``y_init`` draw per group and replicate, covariates drawn per
(group, period) cell from their laws, and ``e ~ Normal(0, noise_sd)``. Each
replicate is a repeated cross-section with ``cell_n`` rows per cell.
"""
from __future__ import annotations

import configparser
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .dataset import PanelDataset
from .design import CovariateForm
from .errors import DataError, EstimationError
from .estimators import EstimatorSpec, resolve
from .linalg import DesignMatrix, kde, kde_grid, ols

DEGREES = {"very-low": 10.0, "low": 50.0, "medium": 100.0, "high": 250.0, "very-high": 500.0}
VIOLATIONS = ("none", "state", "time", "two-way", "two-one-way")
PATTERNS = ("constant", "state", "time", "two-way", "two-one-way")


@dataclass(frozen=True)
class CovariateLaw:
    """Distribution of one covariate, with a location that may vary by cell.

    The location in cell (s, t) is
    ``base + group_shift[s] + (time_trend + group_trend[s]) * (t - t0)``,
    where ``base`` is ``p`` (Bernoulli, clipped to [0.01, 0.99]), the mean
    (Normal) or a shift of both ends (Uniform).
    """

    name: str
    kind: str
    params: tuple[float, ...]
    group_shift: Mapping[str, float] = field(default_factory=dict)
    time_trend: float = 0.0
    group_trend: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        need = {"bernoulli": 1, "normal": 2, "uniform": 2}
        if self.kind not in need:
            raise DataError(f"unknown covariate law {self.kind!r}")
        if len(self.params) != need[self.kind]:
            raise DataError(f"{self.kind} law needs {need[self.kind]} parameter(s)")
        if self.kind == "normal" and self.params[1] < 0:
            raise DataError("normal law needs a nonnegative standard deviation")
        if self.kind == "uniform" and self.params[1] < self.params[0]:
            raise DataError("uniform law needs a <= b")

    @property
    def time_varying(self) -> bool:
        return self.time_trend != 0.0 or any(v != 0.0 for v in self.group_trend.values())

    def shift(self, group: str, dt) -> np.ndarray:
        return (
            self.group_shift.get(group, 0.0)
            + (self.time_trend + self.group_trend.get(group, 0.0)) * np.asarray(dt, dtype=float)
        )

    def draw(self, rng: np.random.Generator, shift: np.ndarray) -> np.ndarray:
        if self.kind == "bernoulli":
            p = np.clip(self.params[0] + shift, 0.01, 0.99)
            return (rng.random(shift.shape[0]) < p).astype(float)
        if self.kind == "normal":
            return self.params[0] + shift + self.params[1] * rng.standard_normal(shift.shape[0])
        a, b = self.params
        return a + shift + (b - a) * rng.random(shift.shape[0])

    def mean(self, shift) -> np.ndarray:
        if self.kind == "bernoulli":
            return np.clip(self.params[0] + shift, 0.01, 0.99)
        if self.kind == "normal":
            return self.params[0] + shift
        return 0.5 * (self.params[0] + self.params[1]) + shift


@dataclass(frozen=True)
class DgpSpec:
    """Complete description of a synthetic design.

    ``gamma`` maps ``(covariate name, group, period)`` to a slope and must
    cover every cell; ``pattern`` records which structure the grid has and
    is checked on construction.
    """

    groups: tuple[str, ...]
    periods: tuple[int, ...]
    first_treated: Mapping[str, Optional[int]]
    covariates: tuple[CovariateLaw, ...]
    gamma: Mapping[tuple[str, str, int], float]
    baseline: Mapping[str, tuple[float, float]]
    pattern: str = "two-way"
    y_init_sd: float = 0.0
    noise_sd: float = 1.0
    true_att: float = 0.0
    cell_n: int = 100

    def __post_init__(self):
        if self.noise_sd < 0 or self.y_init_sd < 0:
            raise DataError("noise_sd and y_init_sd must be nonnegative")
        if self.cell_n < 1:
            raise DataError("cell_n must be at least 1")
        if self.pattern not in PATTERNS:
            raise DataError(f"unknown gamma pattern {self.pattern!r}")
        if len(set(self.groups)) != len(self.groups) or not self.groups:
            raise DataError("groups must be unique and nonempty")
        if list(self.periods) != sorted(set(self.periods)) or not self.periods:
            raise DataError("periods must be strictly increasing")
        for g in self.groups:
            if g not in self.first_treated:
                raise DataError(f"group {g} missing from schedule")
            if g not in self.baseline:
                raise DataError(f"group {g} missing from baseline")
            start = self.first_treated[g]
            if start is not None and start <= self.periods[0]:
                raise DataError(f"no pre-period for group {g}")
        names = [c.name for c in self.covariates]
        if len(set(names)) != len(names):
            raise DataError("covariate names must be unique")
        for name in names:
            for g in self.groups:
                for t in self.periods:
                    if (name, g, t) not in self.gamma:
                        raise DataError(f"gamma grid lacks ({name}, {g}, {t})")
        check_pattern(self)

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.covariates)

    def gamma_array(self, name: str) -> np.ndarray:
        """Slopes of one covariate as a (groups x periods) array."""
        return np.array([[self.gamma[(name, g, t)] for t in self.periods] for g in self.groups])


def check_pattern(spec: DgpSpec, tol: float = 1e-9) -> None:
    """Raise if the gamma grid does not have the structure named by ``spec.pattern``."""
    for name in spec.covariate_names:
        G = spec.gamma_array(name)
        scale = max(1.0, float(np.max(np.abs(G))))
        if spec.pattern == "constant":
            bad = np.ptp(G) > tol * scale
        elif spec.pattern == "state":
            bad = np.max(np.ptp(G, axis=1)) > tol * scale
        elif spec.pattern == "time":
            bad = np.max(np.ptp(G, axis=0)) > tol * scale
        elif spec.pattern == "two-one-way":
            resid = G - G.mean(axis=1, keepdims=True) - G.mean(axis=0, keepdims=True) + G.mean()
            bad = np.max(np.abs(resid)) > tol * scale
        else:
            bad = False
        if bad:
            raise DataError(f"gamma grid for {name} is not of pattern {spec.pattern!r}")


# ----------------------------------------------------------------------
# generation


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def generate(spec: DgpSpec, seed=None) -> PanelDataset:
    """Draw one repeated cross-section from ``spec``; deterministic given ``seed``."""
    rng = _rng(seed)
    G, T, m = len(spec.groups), len(spec.periods), spec.cell_n
    t0 = spec.periods[0]
    y_init = np.array([spec.baseline[g][0] for g in spec.groups], dtype=float)
    if spec.y_init_sd > 0:
        y_init = y_init + spec.y_init_sd * rng.standard_normal(G)
    slope = np.array([spec.baseline[g][1] for g in spec.groups], dtype=float)

    gi = np.repeat(np.arange(G), T * m)
    ti = np.tile(np.repeat(np.arange(T), m), G)
    periods = np.asarray(spec.periods, dtype=np.int64)
    time = periods[ti]
    dt = (time - t0).astype(float)

    K = len(spec.covariates)
    X = np.empty((gi.shape[0], K))
    effect = np.zeros(gi.shape[0])
    for k, law in enumerate(spec.covariates):
        shift = np.empty(gi.shape[0])
        for g_pos, g in enumerate(spec.groups):
            rows = gi == g_pos
            shift[rows] = law.shift(g, dt[rows])
        X[:, k] = law.draw(rng, shift)
        grid = spec.gamma_array(law.name)
        effect += grid[gi, ti] * X[:, k]

    start = np.array(
        [np.iinfo(np.int64).max if spec.first_treated[g] is None else spec.first_treated[g]
         for g in spec.groups]
    )
    D = (time >= start[gi]).astype(float)
    y = y_init[gi] + slope[gi] * dt + effect + spec.true_att * D
    if spec.noise_sd > 0:
        y = y + spec.noise_sd * rng.standard_normal(y.shape[0])
    labels = np.asarray(spec.groups, dtype=object)[gi]
    return PanelDataset.from_arrays(
        labels,
        time,
        y,
        dict(spec.first_treated),
        covariates=X,
        covariate_names=spec.covariate_names,
        groups_order=spec.groups,
    )


# ----------------------------------------------------------------------
# gamma grids


def _grid(spec_groups, spec_periods, name, fn) -> dict:
    return {
        (name, g, t): float(fn(i, j))
        for i, g in enumerate(spec_groups)
        for j, t in enumerate(spec_periods)
    }


def gamma_grid(
    groups: Sequence[str],
    periods: Sequence[int],
    base: Mapping[str, float],
    violation: str = "none",
    gap: float = 0.0,
    affected: Iterable[str] | None = None,
    ranks: Mapping[str, int] | None = None,
) -> dict:
    """Slope grid with a violation of the given kind and size.

    Groups are placed along the violation axis in the order given by
    ``ranks`` (group -> position), or in listed order.

    state
        ``base + gap * i`` for the i-th group (adjacent groups differ by ``gap``).
    time
        ``base + gap * j`` for the j-th period.
    two-one-way
        ``base + gap * (i + j)``.
    two-way
        ``base + gap * u_i * v_j`` with ``u, v`` rising linearly from 0 to 1,
        so the largest spread along either axis is ``gap``.
    none
        ``base`` everywhere.
    """
    if violation not in VIOLATIONS:
        raise DataError(f"unknown violation {violation!r}")
    affected = set(base) if affected is None else set(affected)
    G, T = len(groups), len(periods)
    pos = list(range(G)) if ranks is None else [ranks.get(g, -1) for g in groups]
    if sorted(pos) != list(range(G)):
        raise DataError("ranks must be a permutation of group positions")
    u = np.linspace(0.0, 1.0, G) if G > 1 else np.zeros(1)
    v = np.linspace(0.0, 1.0, T) if T > 1 else np.zeros(1)
    out = {}
    for name, b in base.items():
        kind = violation if name in affected else "none"
        fns = {
            "none": lambda i, j: b,
            "state": lambda i, j: b + gap * pos[i],
            "time": lambda i, j: b + gap * j,
            "two-one-way": lambda i, j: b + gap * (pos[i] + j),
            "two-way": lambda i, j: b + gap * u[pos[i]] * v[j],
        }
        out.update(_grid(groups, periods, name, fns[kind]))
    return out


_PATTERN_OF = {
    "none": "constant",
    "state": "state",
    "time": "time",
    "two-way": "two-way",
    "two-one-way": "two-one-way",
}


def degree_spec(
    base: DgpSpec,
    violation: str,
    degree: str,
    affected: Iterable[str] | None = None,
    ranks: Optional[dict] = None,
) -> DgpSpec:
    """Copy of ``base`` whose slopes violate constancy by the named degree.

    Degrees map to gaps {very-low: 10, low: 50, medium: 100, high: 250,
    very-high: 500}. The base slope of each covariate is its value in the
    first cell of ``base``. ``affected`` limits the violation to some
    covariates (default: all); ``ranks`` is passed to :func:`gamma_grid`.
    """
    if degree not in DEGREES:
        raise DataError(f"unknown degree {degree!r}; choose from {', '.join(DEGREES)}")
    if violation not in VIOLATIONS:
        raise DataError(f"unknown violation {violation!r}")
    first = {
        name: base.gamma[(name, base.groups[0], base.periods[0])] for name in base.covariate_names
    }
    grid = gamma_grid(base.groups, base.periods, first, violation, DEGREES[degree], affected, ranks)
    return replace(base, gamma=grid, pattern=_PATTERN_OF[violation])


STAGGERED_GROUPS = ("RI", "PA", "NJ", "VA", "NY")
STAGGERED_PERIODS = tuple(range(2000, 2015))
STAGGERED_SCHEDULE = {"RI": 2004, "PA": 2004, "NJ": 2009, "VA": 2009, "NY": None}
# position of each group along a violation axis: the never-treated group
# sits at the low end and the early cohort at the high end
STAGGERED_RANKS = {"NY": 0, "VA": 1, "NJ": 2, "PA": 3, "RI": 4}


def staggered_design(
    violation: str = "none",
    degree: str = "medium",
    time_varying: bool = True,
    cell_n: int = 100,
    noise_sd: float = 20.0,
    true_att: float = 0.0,
    affected: Iterable[str] | None = ("educ",),
) -> DgpSpec:
    """Five-group staggered design over 2000-2014.

    Groups RI and PA are first treated in 2004, NJ and VA in 2009, and NY is
    never treated. Two covariates: a college-degree indicator ``educ`` and
    ``age``. Covariate means differ by group; with ``time_varying`` they
    also drift at group-specific rates. Baseline levels differ by group and
    share one trend, so untreated outcomes have parallel trends once the
    covariate terms are removed. Slope violations (``educ`` only by
    default) place groups along the violation axis by ``STAGGERED_RANKS``.
    """
    educ = CovariateLaw(
        "educ",
        "bernoulli",
        (0.30,),
        group_shift={"RI": 0.0, "PA": -0.06, "NJ": 0.06, "VA": -0.03, "NY": 0.09},
        group_trend=(
            {"RI": 0.012, "PA": 0.004, "NJ": 0.010, "VA": 0.0, "NY": 0.006} if time_varying else {}
        ),
    )
    age = CovariateLaw(
        "age",
        "normal",
        (40.0, 8.0),
        group_shift={"RI": 0.0, "PA": 1.5, "NJ": -1.0, "VA": 2.0, "NY": -2.0},
        group_trend=(
            {"RI": 0.20, "PA": -0.10, "NJ": 0.15, "VA": 0.0, "NY": -0.20} if time_varying else {}
        ),
    )
    base = {"educ": 150.0, "age": 5.0}
    grid = gamma_grid(STAGGERED_GROUPS, STAGGERED_PERIODS, base, violation, DEGREES[degree], affected, STAGGERED_RANKS)
    pattern = _PATTERN_OF[violation]
    return DgpSpec(
        groups=STAGGERED_GROUPS,
        periods=STAGGERED_PERIODS,
        first_treated=dict(STAGGERED_SCHEDULE),
        covariates=(educ, age),
        gamma=grid,
        baseline={"RI": (600.0, 5.0), "PA": (650.0, 5.0), "NJ": (700.0, 5.0), "VA": (750.0, 5.0), "NY": (800.0, 5.0)},
        pattern=pattern,
        y_init_sd=30.0,
        noise_sd=noise_sd,
        true_att=true_att,
        cell_n=cell_n,
    )


SELECTION_FAMILIES = {
    "none": "none",
    "homogeneous": "none",
    "state-varying": "state",
    "time-varying": "time",
    "two-one-way": "two-one-way",
    "two-way": "two-way",
}


def selection_design(
    family: str,
    cell_n: int = 200,
    noise_sd: float = 5.0,
    gap: float = 10.0,
    drift: float = 0.5,
    slope: float = 10.0,
) -> DgpSpec:
    """Design whose slope grid follows the named covariate form.

    One continuous covariate ``x ~ Normal(shift_s + trend_s * (t - t0), 1)``
    with group-specific levels and drifts, so each misspecified form leaves
    visibly non-parallel residual trends. ``none`` has no covariate effect;
    ``homogeneous`` has the constant slope ``slope``; the other families
    add a violation of size ``gap`` laid out by ``STAGGERED_RANKS``.
    """
    if family not in SELECTION_FAMILIES:
        raise DataError(f"unknown family {family!r}; choose from {', '.join(SELECTION_FAMILIES)}")
    x = CovariateLaw(
        "x",
        "normal",
        (0.0, 1.0),
        group_shift={"RI": 0.0, "PA": -1.0, "NJ": 1.0, "VA": -2.0, "NY": 2.0},
        group_trend={"RI": drift, "PA": -0.5 * drift, "NJ": 0.75 * drift, "VA": 0.0, "NY": -0.75 * drift},
    )
    violation = SELECTION_FAMILIES[family]
    base = {"x": 0.0 if family == "none" else slope}
    grid = gamma_grid(STAGGERED_GROUPS, STAGGERED_PERIODS, base, violation, gap, None, STAGGERED_RANKS)
    spec = staggered_design(cell_n=cell_n, noise_sd=noise_sd)
    return replace(spec, covariates=(x,), gamma=grid, pattern=_PATTERN_OF[violation])


# ----------------------------------------------------------------------
# calibration


def calibrate(source: PanelDataset, pattern) -> dict:
    """Estimate a slope grid from ``source`` by pattern-matched regressions.

    homogeneous
        one pooled regression of the outcome on a constant and covariates.
    state-varying / time-varying
        one regression per group / per period.
    two-way
        one regression per cell.
    two-one-way
        sum of the per-group and per-period slopes.

    Returns a dict ``(covariate, group, period) -> slope`` covering every
    cell of the source.

    Raises
    ------
    EstimationError
        If a regression has fewer than K + 1 rows or a slope is not identified.
    """
    form = CovariateForm.parse(pattern)
    if form is CovariateForm.NONE:
        raise DataError("calibration needs a covariate pattern")
    if source.K == 0:
        raise DataError("calibration source has no covariates")
    names = source.covariate_names
    K = source.K

    def fit(rows, where) -> np.ndarray:
        if rows.size < K + 1:
            raise EstimationError(f"calibration regression for {where} has {rows.size} rows; needs {K + 1}")
        design = DesignMatrix.from_columns(source.covariates[rows], names)
        res = ols(design, source.outcome[rows], intercept=True)
        missing = [nm for nm in names if nm not in res.coefficients]
        if missing:
            raise EstimationError(f"slope of {missing[0]} not identified for {where}")
        return res.coef(names)

    G = {g: np.flatnonzero(source.group_idx == i) for i, g in enumerate(source.groups)}
    T = {t: np.flatnonzero(source.time == t) for t in source.periods}
    out = {}
    if form is CovariateForm.HOMOGENEOUS:
        b = fit(np.arange(source.n), "pooled sample")
        for g in source.groups:
            for t in source.periods:
                out.update({(nm, g, t): float(b[k]) for k, nm in enumerate(names)})
    elif form is CovariateForm.STATE_VARYING:
        for g in source.groups:
            b = fit(G[g], f"group {g}")
            for t in source.periods:
                out.update({(nm, g, t): float(b[k]) for k, nm in enumerate(names)})
    elif form is CovariateForm.TIME_VARYING:
        for t in source.periods:
            b = fit(T[t], f"period {t}")
            for g in source.groups:
                out.update({(nm, g, t): float(b[k]) for k, nm in enumerate(names)})
    elif form is CovariateForm.TWO_ONE_WAY:
        bg = {g: fit(G[g], f"group {g}") for g in source.groups}
        bt = {t: fit(T[t], f"period {t}") for t in source.periods}
        for g in source.groups:
            for t in source.periods:
                out.update({(nm, g, t): float(bg[g][k] + bt[t][k]) for k, nm in enumerate(names)})
    else:
        for c in source.populated_cells:
            rows = np.flatnonzero((source.group_idx == source.groups.index(c.group)) & (source.time == c.time))
            b = fit(rows, f"cell ({c.group}, {c.time})")
            out.update({(nm, c.group, c.time): float(b[k]) for k, nm in enumerate(names)})
    return out


# ----------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class EstimatorSummary:
    name: str
    mean: float
    mc_se: float
    abs_bias: float
    variance: float
    replicates: np.ndarray
    failures: int
    kde_x: np.ndarray
    kde_y: np.ndarray

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "mc_se": self.mc_se,
            "abs_bias": self.abs_bias,
            "variance": self.variance,
            "failures": self.failures,
            "replicates": [float(v) for v in self.replicates],
        }


@dataclass(frozen=True)
class McSummary:
    true_att: float
    reps: int
    seed: Optional[int]
    estimators: dict

    def __getitem__(self, name: str) -> EstimatorSummary:
        return self.estimators[name]

    def to_dict(self) -> dict:
        return {
            "true_att": self.true_att,
            "reps": self.reps,
            "seed": self.seed,
            "estimators": {k: v.to_dict() for k, v in self.estimators.items()},
        }


def thread_count(threads: Optional[int] = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    raw = os.environ.get("DIDINT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise DataError(f"DIDINT_THREADS must be an integer, got {raw!r}") from None


def _as_spec(e) -> EstimatorSpec:
    return e if isinstance(e, EstimatorSpec) else resolve(e)


def summarize(name: str, values: np.ndarray, true_att: float, failures: int, kde_points: int = 512) -> EstimatorSummary:
    m = values.shape[0]
    mean = float(np.mean(values)) if m else math.nan
    var = float(np.var(values, ddof=1)) if m > 1 else math.nan
    mc_se = math.sqrt(var / m) if m > 1 else math.nan
    try:
        grid = kde_grid(values, kde_points)
        dens = kde(values, grid)
    except ValueError:
        grid = np.zeros(0)
        dens = np.zeros(0)
    return EstimatorSummary(name, mean, mc_se, abs(mean - true_att), var, values, failures, grid, dens)


def run_mc(
    spec: DgpSpec,
    estimators: Sequence,
    reps: int,
    seed: int = 0,
    threads: Optional[int] = None,
    max_failure_rate: float = 0.05,
    kde_points: int = 512,
) -> McSummary:
    """Replicate ``spec`` ``reps`` times and run every estimator on each draw.

    Replicate ``i`` uses the ``i``-th child of ``SeedSequence(seed)``, so
    results do not depend on thread count or completion order.

    Raises
    ------
    EstimationError
        If any estimator fails on more than ``max_failure_rate`` of replicates.
    """
    if reps < 2:
        raise DataError("run_mc needs at least two replicates")
    specs = [_as_spec(e) for e in estimators]
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise DataError("estimator names must be unique")
    children = np.random.SeedSequence(seed).spawn(reps)

    def one(i: int):
        data = generate(spec, children[i])
        row, errs = [], []
        for s in specs:
            try:
                row.append(s(data))
                errs.append(None)
            except (EstimationError, DataError) as exc:
                row.append(math.nan)
                errs.append(str(exc))
        return row, errs

    n_threads = thread_count(threads)
    if n_threads == 1:
        results = [one(i) for i in range(reps)]
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(one, range(reps)))
    values = np.array([r[0] for r in results], dtype=float).reshape(reps, len(specs))
    out = {}
    for j, name in enumerate(names):
        col = values[:, j]
        ok = ~np.isnan(col)
        failures = int(reps - ok.sum())
        if failures > max_failure_rate * reps:
            first = next(r[1][j] for r in results if r[1][j] is not None)
            raise EstimationError(
                f"{name} failed in {failures} of {reps} replicates (first error: {first})"
            )
        out[name] = summarize(name, col[ok], spec.true_att, failures, kde_points)
    return McSummary(spec.true_att, reps, seed, out)


def degree_sweep(
    base: DgpSpec,
    violation: str,
    estimators: Sequence,
    reps: int,
    seed: int = 0,
    affected: Iterable[str] | None = None,
    threads: Optional[int] = None,
    ranks: Optional[dict] = None,
) -> list[dict]:
    """Absolute bias per estimator at each violation degree.

    Every degree reuses the same replicate seeds, so the rows differ only
    through the slope grid.
    """
    rows = []
    for degree, gap in DEGREES.items():
        mc = run_mc(degree_spec(base, violation, degree, affected, ranks), estimators, reps, seed, threads)
        row = {"degree": degree, "gap": gap}
        for name, s in mc.estimators.items():
            row[name] = s.abs_bias
            row[f"{name}_mc_se"] = s.mc_se
        rows.append(row)
    return rows


# ----------------------------------------------------------------------
# plain-text config


def _fmt(x: float) -> str:
    return repr(float(x))


def _parse_mapping(raw: str, cast=float) -> dict:
    out = {}
    raw = raw.strip()
    if not raw:
        return out
    for item in raw.split(","):
        if ":" not in item:
            raise DataError(f"expected key:value, got {item.strip()!r}")
        k, v = item.split(":", 1)
        out[k.strip()] = cast(v)
    return out


def spec_to_config(spec: DgpSpec) -> str:
    """Serialize a spec to the INI-style config (sections of ``key = value``)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["design"] = {
        "groups": ", ".join(spec.groups),
        "periods": ", ".join(str(t) for t in spec.periods),
        "pattern": spec.pattern,
        "cell_n": str(spec.cell_n),
        "noise_sd": _fmt(spec.noise_sd),
        "y_init_sd": _fmt(spec.y_init_sd),
        "true_att": _fmt(spec.true_att),
    }
    cp["schedule"] = {
        g: ("never" if spec.first_treated[g] is None else str(spec.first_treated[g])) for g in spec.groups
    }
    cp["baseline"] = {g: f"{_fmt(spec.baseline[g][0])}, {_fmt(spec.baseline[g][1])}" for g in spec.groups}
    for law in spec.covariates:
        cp[f"covariate.{law.name}"] = {
            "kind": law.kind,
            "params": ", ".join(_fmt(p) for p in law.params),
            "group_shift": ", ".join(f"{g}:{_fmt(v)}" for g, v in law.group_shift.items()),
            "time_trend": _fmt(law.time_trend),
            "group_trend": ", ".join(f"{g}:{_fmt(v)}" for g, v in law.group_trend.items()),
        }
        cp[f"gamma.{law.name}"] = {
            f"{g},{t}": _fmt(spec.gamma[(law.name, g, t)]) for g in spec.groups for t in spec.periods
        }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _periods(raw: str) -> tuple[int, ...]:
    raw = raw.strip()
    if "-" in raw and "," not in raw:
        a, b = raw.split("-", 1)
        return tuple(range(int(a), int(b) + 1))
    return tuple(int(x) for x in raw.split(","))


def spec_from_config(text: str) -> DgpSpec:
    """Parse the config written by :func:`spec_to_config`.

    A gamma section may give ``default = value`` instead of listing every
    ``group,period`` key; listed keys override the default.

    Raises
    ------
    DataError
        On any syntax or consistency problem.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
        d = cp["design"]
        groups = tuple(g.strip() for g in d["groups"].split(","))
        periods = _periods(d["periods"])
        schedule = {}
        for g in groups:
            raw = cp["schedule"].get(g, "never").strip()
            schedule[g] = None if raw.lower() == "never" else int(raw)
        baseline = {}
        for g in groups:
            a, b = (float(x) for x in cp["baseline"][g].split(","))
            baseline[g] = (a, b)
        laws = []
        gamma = {}
        for section in cp.sections():
            if not section.startswith("covariate."):
                continue
            name = section.split(".", 1)[1]
            s = cp[section]
            laws.append(
                CovariateLaw(
                    name,
                    s["kind"].strip(),
                    tuple(float(x) for x in s["params"].split(",")),
                    group_shift=_parse_mapping(s.get("group_shift", "")),
                    time_trend=float(s.get("time_trend", "0")),
                    group_trend=_parse_mapping(s.get("group_trend", "")),
                )
            )
            gs = cp[f"gamma.{name}"]
            default = gs.get("default")
            for g in groups:
                for t in periods:
                    key = f"{g},{t}"
                    if key in gs:
                        gamma[(name, g, t)] = float(gs[key])
                    elif default is not None:
                        gamma[(name, g, t)] = float(default)
        return DgpSpec(
            groups=groups,
            periods=periods,
            first_treated=schedule,
            covariates=tuple(laws),
            gamma=gamma,
            baseline=baseline,
            pattern=d.get("pattern", "two-way").strip(),
            y_init_sd=float(d.get("y_init_sd", "0")),
            noise_sd=float(d.get("noise_sd", "1")),
            true_att=float(d.get("true_att", "0")),
            cell_n=int(d.get("cell_n", "100")),
        )
    except DataError:
        raise
    except (configparser.Error, KeyError, ValueError) as exc:
        raise DataError(f"invalid DGP config: {exc}") from None
