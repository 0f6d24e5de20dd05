from dataclasses import replace

import numpy as np
import pytest

from didint.dataset import CellIndex
from didint.errors import DataError, EstimationError
from didint.estimators import EstimatorSpec
from didint.simulation import (
    DEGREES,
    STAGGERED_RANKS,
    CovariateLaw,
    DgpSpec,
    calibrate,
    degree_spec,
    degree_sweep,
    gamma_grid,
    generate,
    staggered_design,
    run_mc,
    selection_design,
    spec_from_config,
    spec_to_config,
)


def plain_spec(**kw):
    base = dict(
        groups=("a", "b"),
        periods=(1, 2, 3),
        first_treated={"a": 2, "b": None},
        covariates=(),
        gamma={},
        baseline={"a": (10.0, 2.0), "b": (4.0, 2.0)},
        pattern="constant",
        noise_sd=0.0,
        true_att=7.0,
        cell_n=3,
    )
    base.update(kw)
    return DgpSpec(**base)


def test_generate_noiseless_levels():
    data = generate(plain_spec(), seed=0)
    assert data.n == 2 * 3 * 3
    for cell in data.populated_cells:
        y = data.outcome[data.cell_rows(cell)]
        init, slope = {"a": (10.0, 2.0), "b": (4.0, 2.0)}[cell.group]
        treated = cell.group == "a" and cell.time >= 2
        assert np.all(y == init + slope * (cell.time - 1) + 7.0 * treated)


def test_generate_is_seeded():
    spec = staggered_design(cell_n=4)
    a, b = generate(spec, seed=9), generate(spec, seed=9)
    assert np.array_equal(a.outcome, b.outcome)
    assert np.array_equal(a.covariates, b.covariates)
    assert not np.array_equal(a.outcome, generate(spec, seed=10).outcome)


def test_covariate_effect_enters_linearly():
    x = CovariateLaw("x", "normal", (0.0, 1.0))
    spec = plain_spec(
        covariates=(x,),
        gamma=gamma_grid(("a", "b"), (1, 2, 3), {"x": 3.0}),
        true_att=0.0,
        baseline={"a": (0.0, 0.0), "b": (0.0, 0.0)},
    )
    data = generate(spec, seed=1)
    assert np.allclose(data.outcome, 3.0 * data.covariates[:, 0], atol=1e-12)


def test_spec_validation():
    with pytest.raises(DataError, match="pre-period"):
        plain_spec(first_treated={"a": 1, "b": None})
    with pytest.raises(DataError, match="pattern"):
        x = CovariateLaw("x", "normal", (0.0, 1.0))
        plain_spec(covariates=(x,), gamma=gamma_grid(("a", "b"), (1, 2, 3), {"x": 1.0}, "state", 2.0), pattern="time")
    with pytest.raises(DataError):
        CovariateLaw("x", "poisson", (1.0,))


@pytest.mark.parametrize("violation", ["state", "time", "two-way", "two-one-way"])
def test_degree_gaps(violation):
    base = staggered_design(cell_n=2)
    low = degree_spec(base, violation, "very-low", affected=["educ"], ranks=STAGGERED_RANKS).gamma_array("educ")
    high = degree_spec(base, violation, "very-high", affected=["educ"], ranks=STAGGERED_RANKS).gamma_array("educ")
    if violation == "state":
        adjacent = np.diff(np.sort(low[:, 0]))
        assert np.allclose(adjacent, DEGREES["very-low"])
    if violation == "time":
        assert np.allclose(np.diff(low[0]), DEGREES["very-low"])
    if violation == "two-way":
        assert np.ptp(high[:, -1]) == pytest.approx(DEGREES["very-high"])
        assert np.ptp(high[np.argmax(high[:, -1])]) == pytest.approx(DEGREES["very-high"])
    # age keeps its constant slope
    age = degree_spec(base, violation, "high", affected=["educ"]).gamma_array("age")
    assert np.ptp(age) == 0.0


def test_degree_unknown():
    with pytest.raises(DataError):
        degree_spec(staggered_design(cell_n=2), "state", "extreme")


def test_ranks_place_never_treated_low():
    g = staggered_design("state", "low").gamma_array("educ")
    order = [staggered_design().groups.index(k) for k in sorted(STAGGERED_RANKS, key=STAGGERED_RANKS.get)]
    assert np.all(np.diff(g[order, 0]) > 0)


def test_config_round_trip():
    for spec in [staggered_design("two-way", cell_n=7), selection_design("time-varying"), plain_spec()]:
        text = spec_to_config(spec)
        back = spec_from_config(text)
        assert back == spec
        assert spec_to_config(back) == text


def test_config_default_gamma():
    text = spec_to_config(plain_spec())
    text += "\n[covariate.x]\nkind = normal\nparams = 0, 1\n\n[gamma.x]\ndefault = 2.5\na,3 = 2.5\n"
    spec = spec_from_config(text)
    assert spec.gamma_array("x").tolist() == [[2.5] * 3] * 2


@pytest.mark.parametrize("text", ["", "[design]\ngroups = a\n", "not an ini"])
def test_config_errors(text):
    with pytest.raises(DataError):
        spec_from_config(text)


def test_calibrate_constant_slope():
    x = CovariateLaw("x", "normal", (0.0, 1.0), group_shift={"b": 1.0})
    spec = plain_spec(
        covariates=(x,),
        gamma=gamma_grid(("a", "b"), (1, 2, 3), {"x": 5.0}),
        baseline={"a": (3.0, 0.0), "b": (3.0, 0.0)},
        noise_sd=1.0,
        true_att=0.0,
        cell_n=50,
    )
    data = generate(spec, seed=4)
    grid = calibrate(data, "homogeneous")
    assert len(grid) == 6 and len(set(grid.values())) == 1
    x = data.covariates[:, 0]
    se = 1.0 / np.sqrt(np.sum((x - x.mean()) ** 2))
    assert abs(grid[("x", "a", 1)] - 5.0) < 3 * se


def test_calibrate_two_way_noiseless_exact():
    x = CovariateLaw("x", "normal", (0.0, 1.0))
    grid = {("x", g, t): v for (g, t), v in {("a", 1): 1.0, ("a", 2): 2.0, ("b", 1): -3.0, ("b", 2): 4.0}.items()}
    spec = DgpSpec(
        groups=("a", "b"), periods=(1, 2), first_treated={"a": 2, "b": None}, covariates=(x,),
        gamma=grid, baseline={"a": (1.0, 0.0), "b": (2.0, 0.0)}, pattern="two-way",
        noise_sd=0.0, true_att=0.0, cell_n=5,
    )
    got = calibrate(generate(spec, seed=2), "two-way")
    assert len(got) == 4
    for k, v in grid.items():
        assert got[k] == pytest.approx(v, abs=1e-10)


def test_calibrate_too_few_rows():
    x = CovariateLaw("x", "normal", (0.0, 1.0))
    spec = plain_spec(covariates=(x,), gamma=gamma_grid(("a", "b"), (1, 2, 3), {"x": 1.0}), cell_n=1)
    with pytest.raises(EstimationError):
        calibrate(generate(spec, seed=0), "two-way")


def test_run_mc_deterministic_and_thread_independent():
    spec = staggered_design(cell_n=5)
    a = run_mc(spec, ["twfe", "didint-none"], reps=6, seed=3, threads=1)
    b = run_mc(spec, ["twfe", "didint-none"], reps=6, seed=3, threads=3)
    for name in a.estimators:
        assert np.array_equal(a[name].replicates, b[name].replicates)
    assert a.to_dict() == b.to_dict()


def test_run_mc_summary_fields():
    mc = run_mc(plain_spec(noise_sd=1.0), ["didint-none"], reps=20, seed=0)
    s = mc["didint-none"]
    assert s.mean == pytest.approx(np.mean(s.replicates))
    assert s.mc_se == pytest.approx(np.std(s.replicates, ddof=1) / np.sqrt(20))
    assert s.abs_bias == pytest.approx(abs(s.mean - 7.0))
    assert np.trapezoid(s.kde_y, s.kde_x) == pytest.approx(1.0, abs=0.02)


def test_run_mc_failure_rate_abort():
    def flaky(data, **kw):
        raise EstimationError("always fails")

    with pytest.raises(EstimationError, match="failed in 4 of 4"):
        run_mc(plain_spec(), [EstimatorSpec("flaky", flaky)], reps=4)


def test_run_mc_rejects_duplicate_names():
    with pytest.raises(DataError):
        run_mc(plain_spec(), ["twfe", "twfe"], reps=2)


def test_degree_sweep_rows():
    rows = degree_sweep(staggered_design(cell_n=3), "state", ["twfe"], reps=3, affected=["educ"], ranks=STAGGERED_RANKS)
    assert [r["degree"] for r in rows] == list(DEGREES)
    assert all(set(r) == {"degree", "gap", "twfe", "twfe_mc_se"} for r in rows)


def test_threads_env(monkeypatch):
    from didint.simulation import thread_count

    monkeypatch.setenv("DIDINT_THREADS", "4")
    assert thread_count() == 4
    monkeypatch.setenv("DIDINT_THREADS", "x")
    with pytest.raises(DataError):
        thread_count()
