import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from didint.errors import EstimationError, SeparationError
from didint.linalg import DesignMatrix, Partition, kde, kde_grid, logit, ols, silverman_bandwidth


def normal_equations(X, y):
    return np.linalg.solve(X.T @ X, X.T @ y)


def test_mean_of_ones_column():
    fit = ols(DesignMatrix.from_columns(np.ones(2), ["one"]), [2.0, 4.0])
    assert fit.coefficients["one"] == pytest.approx(3.0)


def test_duplicate_column_dropped(rng):
    X = rng.normal(size=(30, 3))
    y = rng.normal(size=30)
    base = ols(DesignMatrix.from_columns(X, "abc"), y)
    dup = ols(DesignMatrix.from_columns(np.column_stack([X, X[:, 1]]), "abcd"), y)
    assert dup.dropped == ("d",)
    for k in "abc":
        assert dup.coefficients[k] == pytest.approx(base.coefficients[k], abs=1e-12)
    np.testing.assert_allclose(dup.residuals, base.residuals, atol=1e-12)


def test_later_aliased_column_is_the_one_dropped(rng):
    a = rng.normal(size=20)
    b = rng.normal(size=20)
    X = np.column_stack([a, a + b, b])
    fit = ols(DesignMatrix.from_columns(X, ["a", "ab", "b"]), rng.normal(size=20))
    assert fit.dropped == ("b",)


@pytest.mark.parametrize("seed", range(5))
def test_matches_normal_equations(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(50, 4))
    y = rng.normal(size=50)
    fit = ols(DesignMatrix.from_columns(X, range(4)), y)
    np.testing.assert_allclose(fit.coef(range(4)), normal_equations(X, y), atol=1e-8)


def test_intercept_option(rng):
    X = rng.normal(size=(40, 2))
    y = 3 + X @ [1.0, -2.0] + rng.normal(size=40)
    fit = ols(DesignMatrix.from_columns(X, "ab"), y, intercept=True)
    A = np.column_stack([np.ones(40), X])
    np.testing.assert_allclose(fit.coef([("intercept",), "a", "b"]), normal_equations(A, y), atol=1e-10)


def test_errors():
    with pytest.raises(EstimationError):
        ols(DesignMatrix.from_columns(np.zeros((0, 1)), ["a"]), np.zeros(0))
    with pytest.raises(EstimationError, match="dropped"):
        ols(DesignMatrix.from_columns(np.zeros((5, 2)), ["a", "b"]), np.ones(5))


def _partitioned(rng, n_cells=6, n=60, q=3, shared=True):
    codes = rng.integers(0, n_cells, n)
    codes[:n_cells] = np.arange(n_cells)
    V = rng.normal(size=(n, q))
    if not shared:
        # each column lives inside one cell
        for j in range(q):
            V[codes != j % n_cells, j] = 0.0
    labels = tuple(("cell", c) for c in range(n_cells)) + tuple(("x", j) for j in range(q))
    return DesignMatrix(V, labels, partition=Partition(codes, labels[:n_cells]))


@pytest.mark.parametrize("shared", [True, False])
def test_absorbed_route_matches_dense(rng, shared):
    X = _partitioned(rng, shared=shared)
    y = rng.normal(size=X.n)
    a = ols(X, y)
    b = ols(X, y, method="dense")
    assert a.labels == b.labels
    np.testing.assert_allclose(a.coef(a.labels), b.coef(b.labels), atol=1e-10)
    np.testing.assert_allclose(a.residuals, b.residuals, atol=1e-10)
    assert a.sigma2 == pytest.approx(b.sigma2, rel=1e-10)
    C = rng.normal(size=(3, a.rank))
    np.testing.assert_allclose(a.contrast_covariance(C), b.contrast_covariance(C), atol=1e-10)


def test_absorbed_drops_like_dense(rng):
    X = _partitioned(rng, shared=False)
    V = X.values.copy()
    codes = X.partition.codes
    V[:, 2] = (codes == 2).astype(float)  # constant within its cell
    X2 = DesignMatrix(V, X.column_labels, X.partition)
    y = rng.normal(size=X.n)
    a, b = ols(X2, y), ols(X2, y, method="dense")
    assert a.dropped == b.dropped == (("x", 2),)


def test_covariance_matches_textbook(rng):
    X = rng.normal(size=(40, 3))
    y = rng.normal(size=40)
    fit = ols(DesignMatrix.from_columns(X, "abc"), y)
    e = y - X @ normal_equations(X, y)
    V = (e @ e / 37) * np.linalg.inv(X.T @ X)
    np.testing.assert_allclose(fit.contrast_covariance(np.eye(3)), V, rtol=1e-8)


def test_saturated_dummies_give_cell_means(rng):
    codes = np.repeat(np.arange(5), 7)
    labels = tuple(range(5))
    y = rng.normal(size=35)
    fit = ols(DesignMatrix(np.zeros((35, 0)), labels, Partition(codes, labels)), y)
    for c in range(5):
        assert fit.coefficients[c] == pytest.approx(y[codes == c].mean(), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(8, 40), st.integers(1, 5))
def test_orthogonality_and_idempotence(seed, n, p):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = rng.normal(size=n) * 10
    D = DesignMatrix.from_columns(X, range(p))
    fit = ols(D, y)
    scale = np.abs(X).max() * np.abs(y).max() * n
    assert np.max(np.abs(X.T @ fit.residuals)) <= 1e-8 * scale
    again = ols(D, fit.residuals)
    assert max(abs(v) for v in again.coefficients.values()) <= 1e-8 * max(1.0, np.abs(y).max())
    # deterministic
    assert ols(D, y).coefficients == fit.coefficients


def test_logit_intercept_only():
    d = np.array([1, 0, 0, 0] * 5, dtype=float)
    fit = logit(np.zeros((20, 0)), d, intercept=True)
    assert fit.coefficients[("intercept",)] == pytest.approx(np.log(1 / 3), abs=1e-8)


def test_logit_matches_direct_optimisation(rng):
    X = rng.normal(size=(300, 2))
    d = (rng.random(300) < 1 / (1 + np.exp(-(0.3 + X @ [1.0, -0.5])))).astype(float)
    A = np.column_stack([np.ones(300), X])

    def nll(b):
        eta = A @ b
        return np.logaddexp(0, eta).sum() - d @ eta

    ref = optimize.minimize(nll, np.zeros(3), method="BFGS", options={"gtol": 1e-10}).x
    fit = logit(X, d, intercept=True)
    np.testing.assert_allclose(fit.coef([("intercept",), "x0", "x1"]), ref, atol=1e-5)


def test_logit_null_slope_unbiased():
    rng = np.random.default_rng(3)
    slopes = []
    for _ in range(1000):
        x = rng.normal(size=100)
        d = (rng.random(100) < 0.4).astype(float)
        slopes.append(logit(x, d, intercept=True).coefficients["x0"])
    slopes = np.array(slopes)
    assert abs(slopes.mean()) < 3 * slopes.std(ddof=1) / np.sqrt(1000)


def test_logit_separation_and_single_class():
    x = np.arange(10.0)
    with pytest.raises(SeparationError, match="separation"):
        logit(x, (x > 4.5).astype(float), intercept=True)
    with pytest.raises(EstimationError):
        logit(x, np.ones(10), intercept=True)


def test_kde_standard_normal():
    x = np.random.default_rng(0).standard_normal(10_000)
    grid = np.linspace(-4, 4, 801)
    dens = kde(x, grid)
    assert dens[400] == pytest.approx(1 / np.sqrt(2 * np.pi), abs=0.02)


def test_kde_degenerate():
    with pytest.raises(ValueError):
        kde([0.0, 0.0])
    with pytest.raises(ValueError):
        kde([1.0])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=60).filter(lambda v: np.std(v) > 1e-6 * (1 + np.abs(v).max())))
def test_kde_integrates_to_one(values):
    grid = kde_grid(values)
    assert np.trapezoid(kde(values, grid), grid) == pytest.approx(1.0, abs=0.01)


def test_silverman_bandwidth():
    x = np.arange(10.0)
    assert silverman_bandwidth(x) == pytest.approx(1.06 * np.std(x, ddof=1) * 10 ** -0.2)
