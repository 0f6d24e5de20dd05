"""Group-level resampling inference for overall effect estimates.

Both procedures treat the group as the unit of assignment and of
sampling, since treatment varies at the group level.
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import stats

from .dataset import PanelDataset
from .errors import DataError, EstimationError
from .estimators import EstimatorSpec, resolve


@dataclass(frozen=True)
class InferenceResult:
    """Estimate plus whichever inference has been run on it.

    Attributes
    ----------
    replicates : dict
        Leave-one-group-out estimates keyed by the omitted group.
    p_randomization : float or None
        Two-sided randomization p-value, ``P(|stat*| >= |stat|)``.
    exhaustive : bool
        Whether every distinct assignment of start periods was enumerated.
    """

    estimate: float
    se: Optional[float] = None
    ci: Optional[tuple] = None
    level: float = 0.95
    replicates: dict = field(default_factory=dict)
    skipped_groups: tuple = ()
    p_randomization: Optional[float] = None
    n_assignments: int = 0
    exhaustive: bool = False
    statistic: str = "estimate"
    warnings: tuple = ()

    def to_dict(self) -> dict:
        out = {"estimate": self.estimate, "warnings": list(self.warnings)}
        if self.se is not None:
            out["jackknife"] = {
                "se": self.se,
                "ci": list(self.ci),
                "level": self.level,
                "replicates": dict(self.replicates),
                "skipped_groups": list(self.skipped_groups),
            }
        if self.p_randomization is not None:
            out["randomization"] = {
                "p_value": self.p_randomization,
                "assignments": self.n_assignments,
                "exhaustive": self.exhaustive,
                "statistic": self.statistic,
            }
        return out


def _spec(estimator) -> EstimatorSpec:
    return resolve(estimator) if isinstance(estimator, str) else estimator


def cluster_jackknife(data: PanelDataset, estimator, level: float = 0.95) -> InferenceResult:
    """Leave-one-group-out jackknife standard error and t interval.

    ``SE^2 = (G'-1)/G' * sum_g (theta_(g) - theta_bar)^2`` over the ``G'``
    feasible replicates; the interval uses ``t`` quantiles with ``G'-1``
    degrees of freedom. A replicate is infeasible when the estimator fails
    on the reduced data (for instance the only never-treated group is
    removed); such groups are reported in ``skipped_groups``.

    Raises
    ------
    EstimationError
        Fewer than three groups, or fewer than two feasible replicates.
    """
    spec = _spec(estimator)
    if len(data.groups) < 3:
        raise EstimationError("too few clusters: the jackknife needs at least 3 groups")
    if not 0 < level < 1:
        raise DataError("level must lie in (0, 1)")
    estimate = spec.run(data).overall_att
    reps, skipped = {}, []
    for g in data.groups:
        try:
            reps[g] = spec.run(data.drop_group(g), lenient=True).overall_att
        except (EstimationError, DataError):
            skipped.append(g)
    G = len(reps)
    if G < 2:
        raise EstimationError("too few feasible jackknife replicates")
    vals = np.array(list(reps.values()))
    mean = math.fsum(vals) / G
    se = math.sqrt((G - 1) / G * math.fsum((vals - mean) ** 2))
    q = float(stats.t.ppf(0.5 + level / 2, G - 1))
    warnings = [f"replicate without group {g} is infeasible; skipped" for g in skipped]
    return InferenceResult(
        estimate=estimate,
        se=se,
        ci=(estimate - q * se, estimate + q * se),
        level=level,
        replicates=reps,
        skipped_groups=tuple(skipped),
        warnings=tuple(warnings),
    )


def _count_assignments(values: list) -> int:
    counts = Counter(values)
    out = math.factorial(len(values))
    for c in counts.values():
        out //= math.factorial(c)
    return out


def _multiset_permutations(values: list):
    """Distinct orderings of ``values`` in lexicographic order of positions."""
    keys = sorted(set(values), key=lambda v: (v is None, v))
    remaining = Counter(values)
    n = len(values)
    out: list = []

    def rec(prefix):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for k in keys:
            if remaining[k]:
                remaining[k] -= 1
                prefix.append(k)
                yield from rec(prefix)
                prefix.pop()
                remaining[k] += 1

    yield from rec(out)


def randomization_inference(
    data: PanelDataset,
    estimator,
    n_perm: int = 999,
    seed=None,
    studentize: bool = False,
) -> InferenceResult:
    """Randomization p-value from reassigning start periods across groups.

    The observed multiset of start periods (never-treated included) is
    permuted over groups. When the number of distinct assignments is at
    most ``n_perm`` all of them are enumerated (the observed one included)
    and ``p = #{|stat*| >= |stat|} / count``; otherwise ``n_perm`` random
    permutations are drawn and ``p = (1 + #{|stat*| >= |stat|}) / (1 + n_perm)``.
    With ``studentize`` the statistic is the estimate over its jackknife
    standard error. Assignments on which the estimator fails are dropped and
    counted in the warnings.

    Raises
    ------
    DataError
        ``n_perm < 99``.
    EstimationError
        Only one distinct assignment exists.
    """
    spec = _spec(estimator)
    if n_perm < 99:
        raise DataError("n_perm must be at least 99")
    starts = [data.schedule.start(g) for g in data.groups]
    total = _count_assignments(starts)
    if total < 2:
        raise EstimationError("only one assignment of treatment timing is possible")

    def stat(d: PanelDataset) -> float:
        if studentize:
            r = cluster_jackknife(d, spec)
            return r.estimate / r.se if r.se > 0 else math.inf
        return spec.run(d).overall_att

    observed = stat(data)
    tol = 1e-12 * max(1.0, abs(observed))
    base = InferenceResult(estimate=spec.run(data).overall_att if studentize else observed)
    failed = 0
    if total <= n_perm:
        hits = count = 0
        for assign in _multiset_permutations(starts):
            try:
                val = stat(data.with_schedule(dict(zip(data.groups, assign))))
            except (EstimationError, DataError):
                failed += 1
                continue
            count += 1
            hits += abs(val) >= abs(observed) - tol
        if count == 0:
            raise EstimationError("estimator failed on every assignment")
        p, n_used, exhaustive = hits / count, count, True
    else:
        rng = np.random.default_rng(seed)
        hits = used = 0
        for _ in range(n_perm):
            assign = [starts[i] for i in rng.permutation(len(starts))]
            try:
                val = stat(data.with_schedule(dict(zip(data.groups, assign))))
            except (EstimationError, DataError):
                failed += 1
                continue
            used += 1
            hits += abs(val) >= abs(observed) - tol
        if used == 0:
            raise EstimationError("estimator failed on every permutation")
        p, n_used, exhaustive = (1 + hits) / (1 + used), used, False
    warnings = (f"{failed} assignment(s) could not be estimated and were dropped",) if failed else ()
    return replace(
        base,
        p_randomization=float(p),
        n_assignments=n_used,
        exhaustive=exhaustive,
        statistic="studentized" if studentize else "estimate",
        warnings=warnings,
    )
