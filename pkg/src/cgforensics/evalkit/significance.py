"""Marginal homogeneity test for paired 3-way classifications.

Two classifiers label the same test images; the 3x3 agreement table N has
rows for classifier A and columns for classifier B. The test statistic is
d' S^-1 d over the first two categories, chi-square with 2 degrees of
freedom under the null of equal marginals.
"""

import numpy as np
from scipy import special


def chi2_sf(x, df) -> float:
    """Chi-square survival function via the regularized upper incomplete
    gamma (for df=2 this equals exp(-x/2), used as a cross-check)."""
    if x < 0:
        raise ValueError("statistic must be non-negative")
    return float(special.gammaincc(df / 2.0, x / 2.0))


def agreement_table(pred_a, pred_b, k=3) -> np.ndarray:
    a = np.asarray(pred_a, dtype=np.int64)
    b = np.asarray(pred_b, dtype=np.int64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired predictions must be equal-length vectors")
    if len(a) == 0:
        raise ValueError("no paired predictions")
    for v in (a, b):
        if v.min() < 0 or v.max() >= k:
            raise ValueError("labels must lie in [0,%d)" % k)
    table = np.zeros((k, k), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    return table


def stuart_maxwell_from_table(table):
    """Returns (statistic, df, p_value) for a 3x3 agreement table.

    A singular covariance (all discordance confined to one category pair)
    is handled with the pseudo-inverse and the rank as degrees of freedom;
    for a single discordant pair this reduces to the McNemar statistic.
    """
    N = np.asarray(table, dtype=np.float64)
    if N.shape != (3, 3) or (N < 0).any():
        raise ValueError("agreement table must be 3x3 and non-negative")
    row = N.sum(axis=1)
    col = N.sum(axis=0)
    d = (row - col)[:2]
    if np.all(d == 0):
        return 0.0, 2, 1.0
    S = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            if i == j:
                S[i, j] = row[i] + col[i] - 2.0 * N[i, i]
            else:
                S[i, j] = -(N[i, j] + N[j, i])
    rank = np.linalg.matrix_rank(S)
    if rank < 2:
        stat = float(d @ np.linalg.pinv(S) @ d)
        df = max(int(rank), 1)
    else:
        stat = float(d @ np.linalg.solve(S, d))
        df = 2
    return stat, df, chi2_sf(stat, df)


def stuart_maxwell(pred_a, pred_b):
    """Test on two paired prediction vectors; see stuart_maxwell_from_table."""
    table = agreement_table(pred_a, pred_b)
    off = table - np.diag(np.diag(table))
    if off.sum() == 0:
        raise ValueError("no discordant pairs; the test is undefined")
    return stuart_maxwell_from_table(table)
