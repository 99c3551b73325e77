"""Pairwise feature association statistics and the similarity matrix.

Three type-dispatched measures, each mapped to [0, 1]:

* numeric-numeric: absolute Pearson correlation |Cov(x,y) / (sx * sy)|
* categorical-categorical: bias-corrected Cramer's V from the chi-square
  contingency statistic
* categorical-numeric: eta squared, the share of numeric variance
  explained by the group means

All statistics use pairwise-complete rows: a row counts only when both
columns are present.  Degenerate inputs (zero variance, one category)
yield similarity 0 rather than errors when building the full matrix.
"""

from __future__ import annotations

import logging

import numpy as np

from .tabular import CATEGORICAL, NUMERIC, Dataset, RowIndexSet

log = logging.getLogger(__name__)


class SimilarityMatrix:
    """Dense symmetric d x d matrix of associations in [0, 1], unit diagonal."""

    def __init__(self, values: np.ndarray, names: list[str]):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("similarity matrix must be square")
        if not np.array_equal(values, values.T):
            raise ValueError("similarity matrix must be symmetric")
        if np.any(values < 0) or np.any(values > 1):
            raise ValueError("similarities must lie in [0, 1]")
        if not np.all(np.diag(values) == 1.0):
            raise ValueError("similarity diagonal must be 1")
        self.values = values
        self.names = list(names)

    @property
    def d(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, ij):
        return self.values[ij]


def pearson_abs(x: np.ndarray, y: np.ndarray) -> float:
    """|Pearson correlation| over jointly present rows; 0 if either std is 0."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    both = np.isfinite(x) & np.isfinite(y)
    if both.sum() < 2:
        raise ValueError("pearson_abs needs at least 2 jointly present rows")
    xv, yv = x[both], y[both]
    xc = xv - xv.mean()
    yc = yv - yv.mean()
    sx = np.sqrt(np.mean(xc * xc))
    sy = np.sqrt(np.mean(yc * yc))
    if sx == 0.0 or sy == 0.0:
        return 0.0
    r = np.mean(xc * yc) / (sx * sy)
    return float(min(abs(r), 1.0))


def cramers_v(x: np.ndarray, y: np.ndarray) -> float:
    """Bias-corrected Cramer's V over jointly present rows (codes >= 0)."""
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    both = (x >= 0) & (y >= 0)
    n = int(both.sum())
    if n == 0:
        raise ValueError("cramers_v needs at least 1 jointly present row")
    xv, yv = x[both], y[both]
    x_levels, xi = np.unique(xv, return_inverse=True)
    y_levels, yi = np.unique(yv, return_inverse=True)
    k, r = x_levels.size, y_levels.size
    if k <= 1 or r <= 1:
        return 0.0
    table = np.zeros((k, r), dtype=np.float64)
    np.add.at(table, (xi, yi), 1.0)
    row = table.sum(axis=1, keepdims=True)
    col = table.sum(axis=0, keepdims=True)
    expected = row @ col / n
    chi2 = np.sum((table - expected) ** 2 / expected)
    phi2 = chi2 / n
    phi2_corr = max(0.0, phi2 - (k - 1) * (r - 1) / (n - 1))
    k_corr = k - (k - 1) ** 2 / (n - 1)
    r_corr = r - (r - 1) ** 2 / (n - 1)
    denom = min(k_corr - 1.0, r_corr - 1.0)
    if denom <= 0.0:
        return 0.0
    return float(min(np.sqrt(phi2_corr / denom), 1.0))


def eta_squared(cat: np.ndarray, num: np.ndarray) -> float:
    """Between-group share of total variance; 0 when total variance is 0."""
    cat = np.asarray(cat, dtype=np.int64)
    num = np.asarray(num, dtype=np.float64)
    both = (cat >= 0) & np.isfinite(num)
    if not both.any():
        raise ValueError("eta_squared needs at least 1 jointly present row")
    cv, nv = cat[both], num[both]
    grand = nv.mean()
    ss_total = np.sum((nv - grand) ** 2)
    if ss_total == 0.0:
        return 0.0
    _, inverse = np.unique(cv, return_inverse=True)
    counts = np.bincount(inverse).astype(np.float64)
    sums = np.bincount(inverse, weights=nv)
    means = sums / counts
    ss_between = np.sum(counts * (means - grand) ** 2)
    return float(min(ss_between / ss_total, 1.0))


def pair_similarity(a_kind, a_vals, b_kind, b_vals) -> float:
    """Dispatch one pair to its statistic; mixed pairs go (cat, num)."""
    if a_kind == NUMERIC and b_kind == NUMERIC:
        return pearson_abs(a_vals, b_vals)
    if a_kind == CATEGORICAL and b_kind == CATEGORICAL:
        return cramers_v(a_vals, b_vals)
    if a_kind == CATEGORICAL:
        return eta_squared(a_vals, b_vals)
    return eta_squared(b_vals, a_vals)


def similarity_matrix(ds: Dataset, rows: RowIndexSet) -> SimilarityMatrix:
    """Full d x d similarity matrix over the given rows.

    Pairs whose statistic fails (no jointly present rows, degenerate
    contingency) get similarity 0 with a logged warning; a dead column
    must not abort the pipeline.
    """
    d = ds.d
    if d < 2:
        raise ValueError("similarity matrix needs at least 2 features")
    idx = rows.indices
    views = [(meta.kind, ds.column(meta.index).values[idx]) for meta in ds.columns]
    S = np.eye(d)
    for i in range(d):
        for j in range(i + 1, d):
            try:
                s = pair_similarity(views[i][0], views[i][1],
                                    views[j][0], views[j][1])
            except ValueError as exc:
                log.warning("similarity(%s, %s) failed (%s); using 0",
                            ds.columns[i].name, ds.columns[j].name, exc)
                s = 0.0
            S[i, j] = S[j, i] = s
    return SimilarityMatrix(S, ds.feature_names)
