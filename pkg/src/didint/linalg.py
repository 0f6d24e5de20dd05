"""Dense least squares, logistic regression and kernel density estimation.

Least squares uses an orthogonal decomposition with limited column pivoting:
columns are visited in declaration order and a column is dropped when its
component orthogonal to the columns already kept is negligible relative to
its own norm. Later columns are therefore the ones dropped on aliasing, and
the outcome is identical from run to run.

Designs whose leading columns are a partition of the rows (one dummy per
cell, every row in exactly one cell) can declare that block. The dummies are
then absorbed by within-cell demeaning, and the remaining columns are solved
separately for each set of cells they connect. This gives the same fit as
the dense route at a fraction of the cost for cell-interacted designs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import EstimationError, SeparationError

RANK_TOL = 1e-10


@dataclass(frozen=True)
class Partition:
    """Leading dummy block of a design: row ``i`` has a one in column ``codes[i]``."""

    codes: np.ndarray
    labels: tuple

    def dense(self) -> np.ndarray:
        out = np.zeros((self.codes.shape[0], len(self.labels)))
        out[np.arange(self.codes.shape[0]), self.codes] = 1.0
        return out


@dataclass(frozen=True)
class DesignMatrix:
    """Regressor matrix with structured column labels.

    Attributes
    ----------
    values : ndarray, shape (n, p)
        Columns other than the partition block.
    column_labels : tuple
        Labels of all columns, partition block first.
    partition : Partition, optional
        Leading block of mutually exclusive dummies covering every row.
    aliasable : frozenset
        Labels known in advance to be possibly collinear with earlier
        columns; informational only, the solver decides what is dropped.
    """

    values: np.ndarray
    column_labels: tuple
    partition: Optional[Partition] = None
    aliasable: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        m = 0 if self.partition is None else len(self.partition.labels)
        if self.values.ndim != 2 or self.values.shape[1] + m != len(self.column_labels):
            raise ValueError("column labels do not match design columns")
        if len(set(self.column_labels)) != len(self.column_labels):
            raise ValueError("column labels must be unique")
        if self.partition is not None and self.partition.codes.shape[0] != self.values.shape[0]:
            raise ValueError("partition codes do not match design rows")

    @classmethod
    def from_columns(cls, values, labels: Sequence[Hashable]) -> "DesignMatrix":
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        return cls(values, tuple(labels))

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def p(self) -> int:
        return len(self.column_labels)

    def dense(self) -> np.ndarray:
        """All columns, partition block included, as one array."""
        if self.partition is None:
            return self.values
        return np.hstack([self.partition.dense(), self.values])

    def column(self, label) -> np.ndarray:
        return self.dense()[:, self.column_labels.index(label)]


class _Unscaled:
    """Applies ``C (X'X)^{-1} C'`` for the retained columns of a fit."""

    def __init__(self, blocks, partition_counts=None, partition_means=None, n_lead=0):
        # blocks: list of (column positions among retained labels, R factor)
        self.blocks = blocks
        self.counts = partition_counts
        self.means = partition_means
        self.n_lead = n_lead

    def quad(self, C: np.ndarray) -> np.ndarray:
        C = np.atleast_2d(np.asarray(C, dtype=float))
        out = np.zeros((C.shape[0], C.shape[0]))
        if self.n_lead:
            CL = C[:, : self.n_lead]
            out += (CL / self.counts) @ CL.T
            G = C[:, self.n_lead:] - CL @ self.means
        else:
            G = C
        for cols, R in self.blocks:
            Z = solve_triangular(R, G[:, cols].T, trans="T")
            out += Z.T @ Z
        return out


@dataclass(frozen=True)
class FitResult:
    """Outcome of a least-squares or logistic fit.

    Attributes
    ----------
    coefficients : dict
        Label to estimate, retained columns only, in design order.
    residuals : ndarray
        ``y - X beta`` in row order (response residuals for logit).
    rank : int
    dropped : tuple
        Labels removed as aliased, in design order.
    sigma2 : float
        Residual variance ``RSS / (n - rank)``; ``nan`` when ``n == rank``.
    """

    coefficients: dict
    residuals: np.ndarray
    rank: int
    dropped: tuple
    sigma2: float = float("nan")
    df_resid: int = 0
    iterations: int = 0
    _unscaled: Optional[_Unscaled] = field(default=None, repr=False, compare=False)

    @property
    def labels(self) -> tuple:
        return tuple(self.coefficients)

    def coef(self, labels: Sequence[Hashable]) -> np.ndarray:
        return np.array([self.coefficients[lab] for lab in labels])

    def contrast_covariance(self, C: np.ndarray) -> np.ndarray:
        """Classical covariance ``sigma2 * C (X'X)^{-1} C'``.

        ``C`` has one column per retained coefficient, in :attr:`labels`
        order.
        """
        if self._unscaled is None:
            raise EstimationError("covariance not available for this fit")
        return self.sigma2 * self._unscaled.quad(C)


# ----------------------------------------------------------------------
# least squares


def _select_columns(R: np.ndarray, norms: np.ndarray, tol: float) -> list[int]:
    """Visit columns in order; keep those with a non-negligible new direction."""
    m, p = R.shape
    Q = np.empty((m, min(m, p)))
    keep: list[int] = []
    for j in range(p):
        if norms[j] == 0.0 or len(keep) == m:
            continue
        v = R[:, j].copy()
        k = len(keep)
        if k:
            Qk = Q[:, :k]
            v -= Qk @ (Qk.T @ v)
            v -= Qk @ (Qk.T @ v)
        r = float(np.sqrt(v @ v))
        if r <= tol * norms[j]:
            continue
        Q[:, k] = v / r
        keep.append(j)
    return keep


def _solve(X: np.ndarray, y: np.ndarray, norms: np.ndarray, tol: float):
    """Return kept column positions, coefficients and the R factor of the kept columns."""
    n, p = X.shape
    R = np.linalg.qr(np.column_stack([X, y]), mode="r")
    keep = _select_columns(R[:, :p], norms, tol)
    k = len(keep)
    if k == 0:
        return keep, np.zeros(0), np.zeros((0, 0))
    Rk = np.linalg.qr(R[:, keep + [p]], mode="r")
    Rkk = Rk[:k, :k]
    beta = solve_triangular(Rkk, Rk[:k, k])
    return keep, beta, Rkk


def ols(
    X: DesignMatrix,
    y,
    intercept: bool = False,
    tol: float = RANK_TOL,
    method: str = "auto",
) -> FitResult:
    """Least squares with deterministic dropping of aliased columns.

    Parameters
    ----------
    X : DesignMatrix
    y : array_like, shape (n,)
    intercept : bool
        Prepend a column of ones labelled ``("intercept",)``.
    tol : float
        Relative tolerance: column ``j`` is dropped when the norm of its
        component orthogonal to the kept earlier columns is at most
        ``tol * ||x_j||``.
    method : {"auto", "dense"}
        ``"dense"`` ignores a declared partition block (used in tests to
        cross-check the absorbed route).

    Raises
    ------
    EstimationError
        If ``n == 0`` or every column is dropped.
    """
    y = np.asarray(y, dtype=float)
    n = X.n
    if n == 0:
        raise EstimationError("cannot fit a regression with no observations")
    if y.shape != (n,):
        raise ValueError("length of y does not match design rows")
    if X.partition is not None and not intercept and method == "auto":
        return _ols_absorbed(X, y, tol)

    A = X.dense()
    labels = X.column_labels
    if intercept:
        A = np.column_stack([np.ones(n), A])
        labels = (("intercept",),) + labels
    if A.shape[1] == 0:
        raise EstimationError("design has no columns")
    norms = np.sqrt(np.einsum("ij,ij->j", A, A))
    keep, beta, R = _solve(A, y, norms, tol)
    if not keep:
        raise EstimationError("all design columns were dropped as aliased")
    resid = y - A[:, keep] @ beta
    k = len(keep)
    df = n - k
    sigma2 = float(resid @ resid / df) if df > 0 else float("nan")
    kept = set(keep)
    return FitResult(
        coefficients={labels[j]: float(b) for j, b in zip(keep, beta)},
        residuals=resid,
        rank=k,
        dropped=tuple(labels[j] for j in range(len(labels)) if j not in kept),
        sigma2=sigma2,
        df_resid=df,
        _unscaled=_Unscaled([(np.arange(k), R)]),
    )


def _ols_absorbed(X: DesignMatrix, y: np.ndarray, tol: float) -> FitResult:
    part = X.partition
    m = len(part.labels)
    V = X.values
    n, q = V.shape
    codes = part.codes
    counts_all = np.bincount(codes, minlength=m)
    present = np.flatnonzero(counts_all)
    order = np.argsort(codes, kind="stable")
    sc = codes[order]
    starts = np.flatnonzero(np.r_[True, sc[1:] != sc[:-1]])
    counts = counts_all[present].astype(float)
    ends = starts + counts_all[present]

    ys = y[order]
    ybar = np.add.reduceat(ys, starts) / counts
    yd = ys - np.repeat(ybar, counts_all[present])

    if q:
        Vs = V[order]
        xbar = np.add.reduceat(Vs, starts, axis=0) / counts[:, None]
        Vd = Vs - np.repeat(xbar, counts_all[present], axis=0)
        norms = np.sqrt(np.einsum("ij,ij->j", V, V))
        support = np.add.reduceat(np.abs(Vs), starts, axis=0) > 0
    else:
        xbar = np.zeros((len(present), 0))
        norms = np.zeros(0)
        support = np.zeros((len(present), 0), dtype=bool)

    # connect cells that share a column
    parent = list(range(len(present)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    col_cells = [np.flatnonzero(support[:, j]) for j in range(q)]
    for cells in col_cells:
        if len(cells) > 1:
            root = find(cells[0])
            for c in cells[1:]:
                rc = find(c)
                if rc != root:
                    parent[rc] = root
    components: dict[int, list[int]] = {}
    for j, cells in enumerate(col_cells):
        if len(cells) and norms[j] > 0:
            components.setdefault(find(cells[0]), []).append(j)

    beta = np.zeros(q)
    kept_cols: list[int] = []
    blocks_local = []
    resid_s = yd.copy()
    roots = np.array([find(c) for c in range(len(present))])
    for root, cols in components.items():
        cells = np.flatnonzero(roots == root)
        if cells.size == 1:
            rows = np.arange(starts[cells[0]], ends[cells[0]])
        else:
            rows = np.concatenate([np.arange(starts[c], ends[c]) for c in cells])
        Xc = Vd[np.ix_(rows, cols)]
        keep, b, R = _solve(Xc, yd[rows], norms[cols], tol)
        if not keep:
            continue
        idx = [cols[j] for j in keep]
        beta[idx] = b
        resid_s[rows] -= Xc[:, keep] @ b
        kept_cols.extend(idx)
        blocks_local.append((idx, R))

    kept_cols_sorted = sorted(kept_cols)
    pos = {j: i for i, j in enumerate(kept_cols_sorted)}
    blocks = [(np.array([pos[j] for j in idx]), R) for idx, R in blocks_local]
    lam = ybar - xbar[:, kept_cols_sorted] @ beta[kept_cols_sorted]

    resid = np.empty(n)
    resid[order] = resid_s
    rank = len(present) + len(kept_cols_sorted)
    df = n - rank
    sigma2 = float(resid @ resid / df) if df > 0 else float("nan")
    cov_labels = X.column_labels[m:]
    coefs = {part.labels[c]: float(v) for c, v in zip(present, lam)}
    coefs.update({cov_labels[j]: float(beta[j]) for j in kept_cols_sorted})
    present_set = set(present.tolist())
    kept_set = set(kept_cols_sorted)
    dropped = tuple(part.labels[c] for c in range(m) if c not in present_set) + tuple(
        cov_labels[j] for j in range(q) if j not in kept_set
    )
    unscaled = _Unscaled(
        blocks,
        partition_counts=counts,
        partition_means=xbar[:, kept_cols_sorted],
        n_lead=len(present),
    )
    return FitResult(
        coefficients=coefs,
        residuals=resid,
        rank=rank,
        dropped=dropped,
        sigma2=sigma2,
        df_resid=df,
        _unscaled=unscaled,
    )


# ----------------------------------------------------------------------
# logistic regression


def logit(
    X,
    d,
    intercept: bool = False,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> FitResult:
    """Maximum-likelihood logistic regression by damped Newton iterations.

    Converges when the largest absolute entry of the mean score is at most
    ``tol``. Aliased columns are dropped first, as in :func:`ols`.

    Raises
    ------
    EstimationError
        Single-class outcome or no convergence within ``max_iter``.
    SeparationError
        Fitted probabilities collapse to 0 or 1 (complete or quasi-complete
        separation).
    """
    if isinstance(X, DesignMatrix):
        A, labels = X.dense(), X.column_labels
    else:
        A = np.asarray(X, dtype=float)
        if A.ndim == 1:
            A = A[:, None]
        labels = tuple(f"x{j}" for j in range(A.shape[1]))
    d = np.asarray(d, dtype=float)
    n = A.shape[0]
    if d.shape != (n,) or n == 0:
        raise ValueError("outcome length does not match design rows")
    if not np.all((d == 0) | (d == 1)):
        raise ValueError("logit outcome must be binary")
    if d.min() == d.max():
        raise EstimationError("logit needs both outcome classes")
    if intercept:
        A = np.column_stack([np.ones(n), A])
        labels = (("intercept",),) + tuple(labels)
    norms = np.sqrt(np.einsum("ij,ij->j", A, A))
    R = np.linalg.qr(A, mode="r")
    keep = _select_columns(R, norms, RANK_TOL)
    if not keep:
        raise EstimationError("all design columns were dropped as aliased")
    Z = A[:, keep]

    def loglik(eta):
        return float(d @ eta - np.logaddexp(0.0, eta).sum())

    beta = np.zeros(len(keep))
    eta = Z @ beta
    ll = loglik(eta)
    for it in range(1, max_iter + 1):
        p = 0.5 * (1.0 + np.tanh(0.5 * eta))
        score = Z.T @ (d - p)
        if np.max(np.abs(score)) / n <= tol:
            break
        w = p * (1.0 - p)
        H = (Z * w[:, None]).T @ Z
        try:
            step = np.linalg.solve(H, score)
        except np.linalg.LinAlgError:
            raise SeparationError("separation: information matrix is singular") from None
        t = 1.0
        while True:
            cand = beta + t * step
            eta_c = Z @ cand
            ll_c = loglik(eta_c)
            if ll_c >= ll - 1e-12 * abs(ll) or t < 1e-10:
                break
            t *= 0.5
        beta, eta, ll = cand, eta_c, ll_c
        if np.max(np.abs(eta)) > 30.0:
            raise SeparationError("separation: fitted probabilities reached 0 or 1")
    else:
        raise EstimationError(f"logit did not converge in {max_iter} iterations")
    p = 0.5 * (1.0 + np.tanh(0.5 * eta))
    kept = set(keep)
    return FitResult(
        coefficients={labels[j]: float(b) for j, b in zip(keep, beta)},
        residuals=d - p,
        rank=len(keep),
        dropped=tuple(labels[j] for j in range(len(labels)) if j not in kept),
        iterations=it - 1,
    )


def logistic(eta) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    return 0.5 * (1.0 + np.tanh(0.5 * eta))


# ----------------------------------------------------------------------
# kernel density


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=float)
    return 1.06 * float(np.std(x, ddof=1)) * x.shape[0] ** (-0.2)


def kde_grid(samples, points: int | None = None) -> np.ndarray:
    """Evaluation grid covering the samples plus five bandwidths each side."""
    x = np.asarray(samples, dtype=float)
    _check_kde(x)
    h = silverman_bandwidth(x)
    lo, hi = x.min() - 5 * h, x.max() + 5 * h
    if points is None:
        points = int(min(20000, max(512, 20 * (hi - lo) / h)))
    return np.linspace(lo, hi, points)


def _check_kde(x: np.ndarray) -> None:
    if x.ndim != 1 or x.shape[0] < 2:
        raise ValueError("kde needs at least two samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("kde samples must be finite")
    if np.std(x) == 0.0:
        raise ValueError("kde samples are degenerate (zero variance)")


def kde(samples, grid=None) -> np.ndarray:
    """Gaussian kernel density with Silverman's bandwidth ``1.06 sd n^(-1/5)``.

    Parameters
    ----------
    samples : array_like
        At least two values with nonzero variance.
    grid : array_like, optional
        Evaluation points; defaults to :func:`kde_grid`.

    Returns
    -------
    ndarray
        Density at each grid point.
    """
    x = np.asarray(samples, dtype=float)
    _check_kde(x)
    grid = kde_grid(x) if grid is None else np.asarray(grid, dtype=float)
    h = silverman_bandwidth(x)
    out = np.empty(grid.shape[0])
    norm = 1.0 / (x.shape[0] * h * np.sqrt(2.0 * np.pi))
    step = max(1, 2_000_000 // x.shape[0])
    for lo in range(0, grid.shape[0], step):
        u = (grid[lo:lo + step, None] - x[None, :]) / h
        out[lo:lo + step] = np.exp(-0.5 * u * u).sum(axis=1) * norm
    return out
