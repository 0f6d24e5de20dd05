"""Panel and repeated cross-section data with a staggered treatment schedule.

A :class:`PanelDataset` stores observations column-wise in read-only numpy
arrays. Group labels are strings, periods are integers, and the treatment
schedule maps every group to its first treated period (``None`` for groups
that are never treated).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .errors import DataError, EstimationError

NEVER = "never"


class CellIndex(NamedTuple):
    """A (group, period) cell."""

    group: str
    time: int


@dataclass(frozen=True)
class Observation:
    """One row of the dataset."""

    unit_id: Optional[str]
    group: str
    time: int
    outcome: float
    covariates: tuple[float, ...]


@dataclass(frozen=True)
class TreatmentSchedule:
    """First treated period per group; ``None`` marks a never-treated group."""

    first_treated: Mapping[str, Optional[int]]

    def start(self, group: str) -> Optional[int]:
        try:
            return self.first_treated[group]
        except KeyError:
            raise DataError(f"group {group!r} missing from treatment schedule") from None

    @property
    def treated_groups(self) -> tuple[str, ...]:
        return tuple(g for g, t in self.first_treated.items() if t is not None)

    @property
    def never_treated(self) -> tuple[str, ...]:
        return tuple(g for g, t in self.first_treated.items() if t is None)

    def is_treated(self, group: str, time: int) -> bool:
        start = self.start(group)
        return start is not None and time >= start

    def untreated_at(self, group: str, time: int) -> bool:
        return not self.is_treated(group, time)


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Validated, immutable panel or repeated cross-section.

    Use :meth:`from_arrays` or :func:`load_csv` to build one; the
    constructor trusts its inputs.

    Attributes
    ----------
    groups : tuple of str
        Ordered group labels (order of first appearance).
    periods : tuple of int
        Sorted distinct periods.
    covariate_names : tuple of str
    schedule : TreatmentSchedule
    group_idx : ndarray of int
        Position of each row's group in ``groups``.
    time : ndarray of int
        Period of each row.
    outcome : ndarray of float
    covariates : ndarray of float, shape (n, K)
    unit_ids : tuple of str, optional
    """

    groups: tuple[str, ...]
    periods: tuple[int, ...]
    covariate_names: tuple[str, ...]
    schedule: TreatmentSchedule
    group_idx: np.ndarray
    time: np.ndarray
    outcome: np.ndarray
    covariates: np.ndarray
    unit_ids: Optional[tuple[str, ...]] = None

    @classmethod
    def from_arrays(
        cls,
        group: Sequence,
        time: Sequence,
        outcome: Sequence,
        schedule: Mapping[str, Optional[int]] | TreatmentSchedule,
        covariates=None,
        covariate_names: Sequence[str] | None = None,
        unit_ids: Sequence | None = None,
        groups_order: Sequence[str] | None = None,
    ) -> "PanelDataset":
        group = [str(g) for g in group]
        n = len(group)
        if n == 0:
            raise DataError("dataset has no observations")
        time_arr = np.asarray(time)
        if time_arr.shape != (n,):
            raise DataError("time column length does not match group column")
        if time_arr.dtype.kind == "f":
            if not np.all(np.isfinite(time_arr)) or np.any(time_arr != np.round(time_arr)):
                raise DataError("time labels must be integers")
        elif time_arr.dtype.kind not in "iu":
            raise DataError("time labels must be integers")
        time_arr = time_arr.astype(np.int64)
        y = np.asarray(outcome, dtype=float)
        if y.shape != (n,):
            raise DataError("outcome length does not match group column")
        if not np.all(np.isfinite(y)):
            raise DataError("outcome contains non-finite values")
        if covariates is None:
            X = np.zeros((n, 0))
        else:
            X = np.asarray(covariates, dtype=float)
            if X.ndim == 1:
                X = X[:, None]
            if X.shape[0] != n:
                raise DataError("covariate rows do not match group column")
        if not np.all(np.isfinite(X)):
            raise DataError("covariates contain non-finite values")
        K = X.shape[1]
        if covariate_names is None:
            covariate_names = tuple(f"x{k + 1}" for k in range(K))
        covariate_names = tuple(covariate_names)
        if len(covariate_names) != K:
            raise DataError("covariate_names length does not match covariate columns")
        if len(set(covariate_names)) != K:
            raise DataError("covariate names must be unique")

        if groups_order is None:
            groups_order = list(dict.fromkeys(group))
        groups_t = tuple(str(g) for g in groups_order)
        lookup = {g: i for i, g in enumerate(groups_t)}
        try:
            gidx = np.array([lookup[g] for g in group], dtype=np.int64)
        except KeyError as exc:
            raise DataError(f"group {exc.args[0]!r} not in group list") from None
        present = np.unique(gidx)
        if len(present) != len(groups_t):
            raise DataError("every listed group must have observations")

        if not isinstance(schedule, TreatmentSchedule):
            schedule = TreatmentSchedule(dict(schedule))
        first = {}
        for g in groups_t:
            if g not in schedule.first_treated:
                raise DataError(f"group {g!r} missing from treatment schedule")
            start = schedule.first_treated[g]
            first[g] = None if start is None else int(start)
        schedule = TreatmentSchedule(first)
        periods = tuple(int(t) for t in np.unique(time_arr))
        for g in groups_t:
            start = first[g]
            if start is not None and start <= periods[0]:
                raise DataError(f"no pre-period for group {g}")

        if unit_ids is not None:
            unit_ids = tuple(str(u) for u in unit_ids)
            if len(unit_ids) != n:
                raise DataError("unit id length does not match group column")

        return cls(
            groups=groups_t,
            periods=periods,
            covariate_names=covariate_names,
            schedule=schedule,
            group_idx=_frozen(gidx),
            time=_frozen(time_arr),
            outcome=_frozen(y.copy()),
            covariates=_frozen(np.ascontiguousarray(X, dtype=float).copy()),
            unit_ids=unit_ids,
        )

    # ------------------------------------------------------------------
    @property
    def n(self) -> int:
        return int(self.outcome.shape[0])

    @property
    def K(self) -> int:
        return int(self.covariates.shape[1])

    @property
    def group_labels(self) -> np.ndarray:
        return np.asarray(self.groups, dtype=object)[self.group_idx]

    @cached_property
    def period_idx(self) -> np.ndarray:
        return _frozen(np.searchsorted(np.asarray(self.periods), self.time))

    @cached_property
    def cell_code(self) -> np.ndarray:
        """Integer code ``group_position * T + period_position`` per row."""
        return _frozen(self.group_idx * len(self.periods) + self.period_idx)

    @cached_property
    def _cell_table(self) -> tuple[np.ndarray, np.ndarray]:
        codes, counts = np.unique(self.cell_code, return_counts=True)
        return codes, counts

    @cached_property
    def populated_cells(self) -> tuple[CellIndex, ...]:
        """Populated cells ordered by group position, then period."""
        T = len(self.periods)
        codes, _ = self._cell_table
        return tuple(CellIndex(self.groups[c // T], self.periods[c % T]) for c in codes)

    @cached_property
    def cell_counts(self) -> dict[CellIndex, int]:
        _, counts = self._cell_table
        return {c: int(k) for c, k in zip(self.populated_cells, counts)}

    def has_cell(self, cell: CellIndex) -> bool:
        return cell in self.cell_counts

    def code_of(self, cell: CellIndex) -> int:
        g = self.groups.index(cell.group)
        t = self.periods.index(cell.time)
        return g * len(self.periods) + t

    def cell_rows(self, cell: CellIndex) -> np.ndarray:
        if not self.has_cell(cell):
            raise DataError(f"cell ({cell.group}, {cell.time}) is not populated")
        return np.flatnonzero(self.cell_code == self.code_of(cell))

    @property
    def observations(self) -> list[Observation]:
        uid = self.unit_ids
        return [
            Observation(
                None if uid is None else uid[i],
                self.groups[self.group_idx[i]],
                int(self.time[i]),
                float(self.outcome[i]),
                tuple(float(v) for v in self.covariates[i]),
            )
            for i in range(self.n)
        ]

    def treatment_dummy(self) -> np.ndarray:
        """Binary treatment indicator: group treated and period >= first treated."""
        start = np.array(
            [np.iinfo(np.int64).max if self.schedule.start(g) is None else self.schedule.start(g)
             for g in self.groups],
            dtype=np.int64,
        )
        return (self.time >= start[self.group_idx]).astype(float)

    def first_treated_array(self) -> np.ndarray:
        """First treated period per row, ``inf`` for never-treated groups."""
        start = np.array(
            [math.inf if self.schedule.start(g) is None else float(self.schedule.start(g))
             for g in self.groups]
        )
        return start[self.group_idx]

    # ------------------------------------------------------------------
    def subset(self, rows: np.ndarray) -> "PanelDataset":
        """Dataset restricted to ``rows``; groups without rows are removed."""
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        keep = [g for i, g in enumerate(self.groups) if np.any(self.group_idx[rows] == i)]
        labels = self.group_labels[rows]
        return PanelDataset.from_arrays(
            labels,
            self.time[rows],
            self.outcome[rows],
            {g: self.schedule.first_treated[g] for g in keep},
            covariates=self.covariates[rows],
            covariate_names=self.covariate_names,
            unit_ids=None if self.unit_ids is None else [self.unit_ids[i] for i in rows],
            groups_order=keep,
        )

    def drop_group(self, group: str) -> "PanelDataset":
        g = self.groups.index(group)
        return self.subset(self.group_idx != g)

    def with_schedule(self, schedule: Mapping[str, Optional[int]]) -> "PanelDataset":
        """Same observations under a different treatment schedule."""
        return PanelDataset.from_arrays(
            self.group_labels,
            self.time,
            self.outcome,
            schedule,
            covariates=self.covariates,
            covariate_names=self.covariate_names,
            unit_ids=self.unit_ids,
            groups_order=self.groups,
        )

    def with_outcome(self, outcome) -> "PanelDataset":
        y = np.asarray(outcome, dtype=float)
        if y.shape != self.outcome.shape or not np.all(np.isfinite(y)):
            raise DataError("replacement outcome must be finite with one value per row")
        return PanelDataset(
            groups=self.groups,
            periods=self.periods,
            covariate_names=self.covariate_names,
            schedule=self.schedule,
            group_idx=self.group_idx,
            time=self.time,
            outcome=_frozen(y.copy()),
            covariates=self.covariates,
            unit_ids=self.unit_ids,
        )


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


# ----------------------------------------------------------------------
# queries


def cell_mean(data: PanelDataset, cell: CellIndex) -> float:
    """Arithmetic mean of the outcomes in ``cell``."""
    rows = data.cell_rows(cell)
    return float(np.mean(data.outcome[rows]))


def eligible_controls(data: PanelDataset, cell: CellIndex) -> set[str]:
    """Groups not yet treated at ``cell.time`` (never-treated included).

    Raises
    ------
    DataError
        If the cell's group is untreated at ``cell.time``.
    EstimationError
        If no group qualifies.
    """
    start = data.schedule.start(cell.group)
    if start is None or cell.time < start:
        raise DataError(f"cell ({cell.group}, {cell.time}) is not a treated cell")
    out = {
        g
        for g in data.groups
        if g != cell.group and data.schedule.untreated_at(g, cell.time)
    }
    if not out:
        raise EstimationError(f"no valid control for ({cell.group}, {cell.time})")
    return out


# ----------------------------------------------------------------------
# CSV input / output


@dataclass(frozen=True)
class Schema:
    """Column names used when reading a CSV file.

    Either ``treat`` (a first-treated-period column, blank or ``never`` for
    untreated groups) or ``schedule_path`` (sidecar ``group,first_treated``
    file) must be supplied; both may be given if they agree.
    """

    group: str = "group"
    time: str = "time"
    outcome: str = "outcome"
    covariates: tuple[str, ...] = ()
    treat: Optional[str] = None
    unit: Optional[str] = None
    schedule_path: Optional[str] = None


def _parse_start(raw: str, where: str) -> Optional[int]:
    raw = raw.strip()
    if raw == "" or raw.lower() == NEVER:
        return None
    try:
        value = float(raw)
    except ValueError:
        raise DataError(f"{where}: first treated period {raw!r} is not a number") from None
    if not math.isfinite(value):
        return None
    if value != round(value):
        raise DataError(f"{where}: first treated period {raw!r} is not an integer")
    return int(value)


def _parse_float(raw: str, column: str, line: int) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise DataError(f"non-numeric value {raw!r} in column {column!r} (line {line})") from None
    if not math.isfinite(value):
        raise DataError(f"non-finite value {raw!r} in column {column!r} (line {line})")
    return value


def read_schedule(path) -> dict[str, Optional[int]]:
    """Read a sidecar ``group,first_treated`` schedule file."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"group", "first_treated"} <= set(reader.fieldnames):
            raise DataError(f"{path}: schedule file needs columns group,first_treated")
        out: dict[str, Optional[int]] = {}
        for line, row in enumerate(reader, start=2):
            g = row["group"]
            start = _parse_start(row["first_treated"], f"{path} line {line}")
            if g in out and out[g] != start:
                raise DataError(f"{path}: conflicting schedule entries for group {g}")
            out[g] = start
    return out


def load_csv(path, schema: Schema = Schema()) -> PanelDataset:
    """Load and validate a CSV file (header row required).

    Raises
    ------
    DataError
        On a missing file or column, non-numeric values, an empty file,
        inconsistent treatment periods, or a treated group without a
        pre-treatment period.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    if schema.treat is None and schema.schedule_path is None:
        raise DataError("schema needs a treatment column or a schedule file")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise DataError(f"{path}: empty file")
        needed = [schema.group, schema.time, schema.outcome, *schema.covariates]
        if schema.treat is not None:
            needed.append(schema.treat)
        if schema.unit is not None:
            needed.append(schema.unit)
        for col in needed:
            if col not in header:
                raise DataError(f"{path}: missing column {col!r}")
        groups, times, ys, xs, units = [], [], [], [], []
        from_column: dict[str, Optional[int]] = {}
        for line, row in enumerate(reader, start=2):
            g = row[schema.group]
            if g is None or g == "":
                raise DataError(f"{path}: empty group label (line {line})")
            groups.append(g)
            t = _parse_float(row[schema.time], schema.time, line)
            if t != round(t):
                raise DataError(f"{path}: non-integer period {row[schema.time]!r} (line {line})")
            times.append(int(t))
            ys.append(_parse_float(row[schema.outcome], schema.outcome, line))
            xs.append([_parse_float(row[c], c, line) for c in schema.covariates])
            if schema.unit is not None:
                units.append(row[schema.unit])
            if schema.treat is not None:
                start = _parse_start(row[schema.treat], f"{path} line {line}")
                if g in from_column and from_column[g] != start:
                    raise DataError(f"{path}: treatment period varies within group {g}")
                from_column[g] = start
    if not groups:
        raise DataError(f"{path}: empty file")

    schedule = from_column
    if schema.schedule_path is not None:
        side = read_schedule(schema.schedule_path)
        for g in dict.fromkeys(groups):
            if g not in side:
                raise DataError(f"group {g!r} missing from schedule file")
            if schema.treat is not None and side[g] != from_column.get(g):
                raise DataError(f"treatment column and schedule file disagree for group {g}")
        schedule = {g: side[g] for g in dict.fromkeys(groups)}

    K = len(schema.covariates)
    X = np.asarray(xs, dtype=float).reshape(len(groups), K)
    return PanelDataset.from_arrays(
        groups,
        np.asarray(times, dtype=np.int64),
        ys,
        schedule,
        covariates=X,
        covariate_names=schema.covariates,
        unit_ids=units if schema.unit is not None else None,
    )


def write_csv(data: PanelDataset, path, include_unit: bool | None = None) -> Schema:
    """Write ``data`` to CSV with a first-treated column; returns the schema to reload it.

    Floats are written with ``repr`` so reloading is exact.
    """
    include_unit = data.unit_ids is not None if include_unit is None else include_unit
    names = list(data.covariate_names)
    header = ["group", "time", "outcome", *names, "first_treated"]
    if include_unit:
        header.insert(0, "unit")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(data.n):
            g = data.groups[data.group_idx[i]]
            start = data.schedule.first_treated[g]
            row = [g, int(data.time[i]), repr(float(data.outcome[i]))]
            row += [repr(float(v)) for v in data.covariates[i]]
            row.append(NEVER if start is None else start)
            if include_unit:
                row.insert(0, data.unit_ids[i])
            w.writerow(row)
    return Schema(
        covariates=tuple(names),
        treat="first_treated",
        unit="unit" if include_unit else None,
    )


def summarize_schedule(data: PanelDataset) -> dict[str, object]:
    return {g: (NEVER if t is None else t) for g, t in data.schedule.first_treated.items()}


def cohorts(data: PanelDataset) -> dict[int, list[str]]:
    """Treated groups keyed by first treated period, in ascending order."""
    out: dict[int, list[str]] = {}
    for g in data.groups:
        start = data.schedule.start(g)
        if start is not None:
            out.setdefault(start, []).append(g)
    return dict(sorted(out.items()))


def groups_untreated_through(data: PanelDataset, time: int, exclude: Iterable[str] = ()) -> list[str]:
    """Groups still untreated at ``time`` (in dataset order)."""
    exclude = set(exclude)
    return [g for g in data.groups if g not in exclude and data.schedule.untreated_at(g, time)]
