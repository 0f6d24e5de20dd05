"""Command-line interface: ``didint estimate | select | simulate | generate | spec``.

Exit codes: 0 success, 2 input or configuration error, 3 estimation failure.
All files are written under ``--out`` with fixed names.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from typing import Optional, Sequence

from . import simulation
from .dataset import PanelDataset, Schema, load_csv, write_csv
from .design import CovariateForm
from .errors import DataError, EstimationError
from .estimators import REGISTRY, EstimatorSpec, csdid, didint, flex, resolve
from .inference import cluster_jackknife, randomization_inference
from .selection import export_trends, select_form
from .svg import line_chart

EXIT_OK, EXIT_INPUT, EXIT_ESTIMATION = 0, 2, 3

ESTIMATOR_CHOICES = ("didint", "twfe", "twfe-mod", "csdid", "imputation", "flex")


def _csv_list(raw: Optional[str]) -> tuple[str, ...]:
    if not raw:
        return ()
    return tuple(x.strip() for x in raw.split(",") if x.strip())


def _add_schema_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("data", help="input CSV, one row per observation")
    p.add_argument("--group", default="group", help="group column (default: group)")
    p.add_argument("--time", default="time", help="period column (default: time)")
    p.add_argument("--outcome", default="outcome", help="outcome column (default: outcome)")
    p.add_argument("--covariates", default="", help="comma-separated covariate columns")
    p.add_argument("--treat", default=None, help="first-treated-period column (blank or 'never' if untreated)")
    p.add_argument("--schedule", default=None, help="sidecar CSV with group,first_treated")
    p.add_argument("--unit", default=None, help="unit id column (optional)")


def _load(args) -> PanelDataset:
    treat = args.treat
    if treat is None and args.schedule is None:
        treat = "first_treated"
    schema = Schema(
        group=args.group,
        time=args.time,
        outcome=args.outcome,
        covariates=_csv_list(args.covariates),
        treat=treat,
        unit=args.unit,
        schedule_path=args.schedule,
    )
    return load_csv(args.data, schema)


def _write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _clean(x):
    """Replace non-finite floats so JSON output stays valid."""
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def build_estimator(args) -> EstimatorSpec:
    """Map ``--estimator`` and its modifiers to a runnable spec."""
    name = args.estimator
    if name == "didint":
        form = CovariateForm.parse(args.form)
        return EstimatorSpec(
            f"didint-{form.value}", didint, {"form": form, "weighting": args.weights}, lenient=True
        )
    if name == "csdid":
        return EstimatorSpec(
            "csdid", csdid, {"adjustment": args.adjustment, "weighting": args.weights}, lenient=True
        )
    if name == "flex":
        return EstimatorSpec("flex", flex, {"weighting": args.weights})
    return resolve(name)


# ----------------------------------------------------------------------
# commands


def cmd_estimate(args) -> int:
    data = _load(args)
    spec = build_estimator(args)
    report = spec.run(data)
    inference: dict = {}
    se = p = None
    if args.jackknife:
        jk = cluster_jackknife(data, spec)
        se = jk.se
        inference["jackknife"] = jk.to_dict()["jackknife"]
        inference.setdefault("warnings", []).extend(jk.warnings)
    if args.ri:
        ri = randomization_inference(data, spec, n_perm=args.nperm, seed=args.seed)
        p = ri.p_randomization
        inference["randomization"] = ri.to_dict()["randomization"]
        inference["randomization"]["seed"] = args.seed
        inference.setdefault("warnings", []).extend(ri.warnings)
    report = report.with_inference(se=se, p_randomization=p, inference=inference)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "report.json"), _dump(_clean(report.to_dict())))
    _write(os.path.join(args.out, "cells.csv"), report.cells_csv())
    print(f"{report.estimator_name}: overall ATT = {report.overall_att:.6g}")
    for note in report.diagnostics:
        print(f"note: {note}", file=sys.stderr)
    return EXIT_OK


def cmd_select(args) -> int:
    data = _load(args)
    trace = select_form(data, alpha=args.alpha, include_two_one_way=not args.no_two_one_way)
    os.makedirs(args.out, exist_ok=True)
    files = []
    for i, step in enumerate(trace.steps, start=1):
        stem = f"step{i}_{step.form.value}"
        export_trends(data, step.form, args.out, stem)
        files.append(stem)
    out = trace.to_dict()
    out["trend_files"] = files
    _write(os.path.join(args.out, "selection.json"), _dump(_clean(out)))
    print("no plausible pre-trends" if trace.chosen is None else trace.chosen.value)
    return EXIT_OK


def _densities_svg(mc) -> str:
    series = {
        name: (s.kde_x.tolist(), s.kde_y.tolist())
        for name, s in mc.estimators.items()
        if s.kde_x.size
    }
    return line_chart(
        series,
        rules=[mc.true_att],
        title="Sampling distributions of the estimates",
        xlabel="estimate",
        ylabel="density",
    )


def _kde_csv(s) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "density"])
    for x, y in zip(s.kde_x.tolist(), s.kde_y.tolist()):
        w.writerow([repr(x), repr(y)])
    return buf.getvalue()


def _bias_csv(rows: list[dict], names: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["degree", "gap"]
    for n in names:
        header += [n, f"{n}_mc_se"]
    w.writerow(header)
    for r in rows:
        w.writerow([r["degree"], repr(float(r["gap"]))] + [repr(float(r[h])) for h in header[2:]])
    return buf.getvalue()


def _read_spec(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read DGP config {path}: {exc.strerror}") from None
    return simulation.spec_from_config(text)


def _ranks(raw: Optional[str]):
    if not raw:
        return None
    try:
        return {k: int(v) for k, v in simulation._parse_mapping(raw, int).items()}
    except ValueError:
        raise DataError(f"invalid --ranks value {raw!r}") from None


def cmd_simulate(args) -> int:
    spec = _read_spec(args.spec)
    names = _csv_list(args.estimators)
    if not names:
        raise DataError("--estimators must name at least one estimator")
    estimators = [resolve(n) for n in names]
    os.makedirs(args.out, exist_ok=True)
    mc = simulation.run_mc(spec, estimators, args.reps, seed=args.seed, threads=args.threads)
    _write(os.path.join(args.out, "mc.json"), _dump(_clean(mc.to_dict())))
    for name, s in mc.estimators.items():
        _write(os.path.join(args.out, f"kde_{name}.csv"), _kde_csv(s))
    _write(os.path.join(args.out, "densities.svg"), _densities_svg(mc))
    for name, s in mc.estimators.items():
        print(f"{name}: mean {s.mean:.6g}  mc_se {s.mc_se:.3g}  abs_bias {s.abs_bias:.6g}")
    if args.degree_sweep:
        affected = _csv_list(args.affected) or None
        rows = simulation.degree_sweep(
            spec, args.degree_sweep, estimators, args.reps, args.seed, affected, args.threads,
            _ranks(args.ranks),
        )
        _write(os.path.join(args.out, "bias_table.csv"), _bias_csv(rows, [e.name for e in estimators]))
    return EXIT_OK


def cmd_generate(args) -> int:
    spec = _read_spec(args.spec)
    data = simulation.generate(spec, args.seed)
    parent = os.path.dirname(os.path.abspath(args.output))
    os.makedirs(parent, exist_ok=True)
    write_csv(data, args.output)
    print(f"wrote {data.n} rows to {args.output}")
    return EXIT_OK


def cmd_spec(args) -> int:
    if args.family:
        spec = simulation.selection_design(args.family, cell_n=args.cell_n)
    else:
        spec = simulation.staggered_design(
            args.violation,
            args.degree,
            time_varying=not args.time_invariant,
            cell_n=args.cell_n,
            noise_sd=args.noise_sd,
            true_att=args.att,
        )
    text = simulation.spec_to_config(spec)
    if args.output:
        _write(args.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ----------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="didint", description="Intersection difference-in-differences toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate the overall ATT")
    _add_schema_args(p)
    p.add_argument("--estimator", default="didint", choices=sorted(set(ESTIMATOR_CHOICES) | set(REGISTRY)))
    p.add_argument("--form", default="two-way", help="covariate form for didint (default: two-way)")
    p.add_argument("--adjustment", default="none", help="csdid adjustment: none, or, ipw, dr")
    p.add_argument("--weights", default="cell-size", choices=("cell-size", "equal"))
    p.add_argument("--jackknife", action="store_true", help="leave-one-group-out standard error")
    p.add_argument("--ri", action="store_true", help="randomization inference p-value")
    p.add_argument("--nperm", type=int, default=999)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("select", help="choose a covariate form from residualized pre-trends")
    _add_schema_args(p)
    p.add_argument("--alpha", type=float, default=0.10)
    p.add_argument("--no-two-one-way", action="store_true", help="skip the two-one-way step")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", help="Monte Carlo study from a DGP config")
    p.add_argument("--spec", required=True, help="DGP config file")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--estimators", default="twfe,twfe-mod,didint-two-way")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: DIDINT_THREADS or 1)")
    p.add_argument("--degree-sweep", default=None, choices=simulation.VIOLATIONS[1:],
                   help="also write bias_table.csv over violation degrees")
    p.add_argument("--affected", default="", help="covariates the sweep violates (default: all)")
    p.add_argument("--ranks", default="", help="group:position list for the sweep, e.g. NY:0,VA:1")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("generate", help="draw one dataset from a DGP config")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="CSV path")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("spec", help="write a built-in DGP config")
    p.add_argument("--violation", default="none", choices=simulation.VIOLATIONS)
    p.add_argument("--degree", default="medium", choices=tuple(simulation.DEGREES))
    p.add_argument("--time-invariant", action="store_true", help="covariate means fixed over time")
    p.add_argument("--family", default=None, choices=tuple(simulation.SELECTION_FAMILIES),
                   help="model-selection design instead of the staggered study design")
    p.add_argument("--cell-n", type=int, default=100)
    p.add_argument("--noise-sd", type=float, default=20.0)
    p.add_argument("--att", type=float, default=0.0)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_spec)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except EstimationError as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
