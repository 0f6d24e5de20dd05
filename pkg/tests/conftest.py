import numpy as np
import pytest

from didint.dataset import PanelDataset


def make_panel(cells, schedule, covariates=None, names=None, n_per_cell=None):
    """Build a dataset from {(group, time): outcomes}.

    ``covariates`` maps the same keys to arrays of shape (n_cell, K).
    """
    groups, times, ys, xs = [], [], [], []
    for (g, t), vals in cells.items():
        vals = np.atleast_1d(np.asarray(vals, dtype=float))
        groups += [g] * vals.size
        times += [t] * vals.size
        ys.append(vals)
        if covariates is not None:
            xs.append(np.asarray(covariates[(g, t)], dtype=float).reshape(vals.size, -1))
    X = None if covariates is None else np.vstack(xs)
    return PanelDataset.from_arrays(groups, times, np.concatenate(ys), schedule, X, names)


def random_panel(rng, groups, periods, schedule, n=6, K=0, noise=1.0):
    g, t, y = [], [], []
    for s in groups:
        for p in periods:
            g += [s] * n
            t += [p] * n
            y.append(rng.normal(0.0, noise, n) + rng.normal())
    X = rng.normal(size=(len(g), K)) if K else None
    return PanelDataset.from_arrays(g, t, np.concatenate(y), schedule, X)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ela():
    """Three groups (early, late, never) over three periods, 4 rows per cell."""
    rng = np.random.default_rng(7)
    return random_panel(rng, ["e", "l", "u"], [1, 2, 3], {"e": 2, "l": 3, "u": None}, n=4, K=1)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
