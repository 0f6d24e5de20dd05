import math

import numpy as np
import pytest

from conftest import random_panel
from didint.dataset import PanelDataset
from didint.errors import DataError, EstimationError
from didint.estimators import EstimatorSpec, resolve
from didint.inference import (
    _count_assignments,
    _multiset_permutations,
    cluster_jackknife,
    randomization_inference,
)



class _Const:
    def __init__(self, v):
        self.overall_att = v


@pytest.fixture
def five(rng):
    return random_panel(rng, list("abcde"), [1, 2, 3, 4], {"a": 3, "b": 3, "c": 4, "d": None, "e": None}, n=5)


def test_jackknife_identical_replicates_zero_se(five):
    spec = EstimatorSpec("const", lambda d, **kw: _Const(2.5))
    res = cluster_jackknife(five, spec)
    assert res.se == 0.0
    assert res.ci == (2.5, 2.5)


def test_jackknife_matches_hand_formula(five):
    spec = resolve("didint-none")
    res = cluster_jackknife(five, spec)
    reps = np.array(list(res.replicates.values()))
    G = reps.size
    se = math.sqrt((G - 1) / G * np.sum((reps - reps.mean()) ** 2))
    assert res.se == pytest.approx(se, rel=1e-12)
    width = res.ci[1] - res.estimate
    from scipy import stats

    assert width == pytest.approx(stats.t.ppf(0.975, G - 1) * se, rel=1e-12)


def test_jackknife_skips_infeasible(five):
    # with one never-treated group left, removing it leaves the late
    # cohort without controls; the replicate drops those cells
    data = five.drop_group("e")
    res = cluster_jackknife(data, "didint-none")
    assert res.estimate == pytest.approx(resolve("didint-none")(data))
    assert len(res.replicates) + len(res.skipped_groups) == 4


def test_jackknife_too_few_clusters(rng):
    data = random_panel(rng, ["a", "b"], [1, 2], {"a": 2, "b": None})
    with pytest.raises(EstimationError, match="too few clusters"):
        cluster_jackknife(data, "didint-none")


def test_multiset_enumeration():
    perms = list(_multiset_permutations([2, None, None]))
    assert len(perms) == 3 == _count_assignments([2, None, None])
    assert len(set(perms)) == 3
    assert _count_assignments([3, 3, 4, None, None]) == 30


def test_exhaustive_three_group_p_values(rng):
    data = random_panel(rng, ["a", "b", "c"], [1, 2], {"a": 2, "b": None, "c": None}, n=4)
    res = randomization_inference(data, "didint-none")
    assert res.exhaustive and res.n_assignments == 3
    assert min(abs(res.p_randomization - k / 3) for k in (1, 2, 3)) < 1e-12


def test_sampled_p_value_floor():
    rng = np.random.default_rng(1)
    groups = [f"g{i}" for i in range(10)]
    sched = {g: (2 if i < 5 else None) for i, g in enumerate(groups)}
    data = random_panel(rng, groups, [1, 2], sched, n=3)
    # a huge effect makes the observed statistic extreme
    y = data.outcome + 100.0 * data.treatment_dummy()
    data = data.with_outcome(y)
    res = randomization_inference(data, "didint-none", n_perm=99, seed=3)
    assert not res.exhaustive
    assert res.n_assignments == 99
    assert 1 / 100 <= res.p_randomization < 0.1


def test_n_perm_too_small(five):
    with pytest.raises(DataError):
        randomization_inference(five, "didint-none", n_perm=50)


def test_single_assignment(rng):
    data = random_panel(rng, ["a", "b"], [1, 2, 3], {"a": 2, "b": 2})
    with pytest.raises(EstimationError):
        randomization_inference(data, "didint-none")


def test_seeded_determinism():
    rng = np.random.default_rng(2)
    groups = [f"g{i}" for i in range(9)]
    sched = {g: [2, 3, None][i % 3] for i, g in enumerate(groups)}
    data = random_panel(rng, groups, [1, 2, 3], sched, n=3)
    a = randomization_inference(data, "didint-none", n_perm=199, seed=5)
    b = randomization_inference(data, "didint-none", n_perm=199, seed=5)
    assert a == b


def test_relabeling_invariance(five):
    mapping = {"a": "zz", "b": "yy", "c": "xx", "d": "ww", "e": "vv"}
    relabeled = PanelDataset.from_arrays(
        [mapping[g] for g in five.group_labels],
        five.time,
        five.outcome,
        {mapping[g]: five.schedule.start(g) for g in five.groups},
    )
    a = randomization_inference(five, "didint-none")
    b = randomization_inference(relabeled, "didint-none")
    assert a.p_randomization == pytest.approx(b.p_randomization, abs=1e-12)
    ja, jb = cluster_jackknife(five, "didint-none"), cluster_jackknife(relabeled, "didint-none")
    assert ja.se == pytest.approx(jb.se, rel=1e-12)


def test_to_dict_sections(five):
    res = randomization_inference(five, "didint-none")
    d = res.to_dict()
    assert "randomization" in d and "jackknife" not in d
    assert d["randomization"]["exhaustive"] is True
