"""Clustering-quality and outlier-detection metrics.

The adjusted Rand index is computed from exact integer pair counts (the
division happens once, at the end), so near-chance partitions do not suffer
cancellation.  Centroid error is permutation-aligned: brute force for small
cluster counts, Hungarian assignment above that.
"""

from __future__ import annotations

from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = ["ari", "rmse_centers", "outlier_prf"]


def _comb2(k: np.ndarray) -> np.ndarray:
    return k * (k - 1) // 2


def ari(a, b, exclude=None) -> float:
    """Adjusted Rand index between two partitions.

    ``exclude`` is an optional boolean mask of points to drop before scoring
    (e.g. flagged outliers).  Needs at least two points after exclusion.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("partitions must be equal-length 1-D label vectors")
    if exclude is not None:
        keep = ~np.asarray(exclude, dtype=bool)
        if keep.shape != a.shape:
            raise ValueError("exclusion mask must match the labels")
        a, b = a[keep], b[keep]
    n = a.size
    if n < 2:
        raise ValueError("need at least 2 points to score a partition")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    sum_ij = int(_comb2(table).sum())
    sum_a = int(_comb2(table.sum(axis=1)).sum())
    sum_b = int(_comb2(table.sum(axis=0)).sum())
    total = int(_comb2(np.int64(n)))
    # 2 (T s_ij - s_a s_b) / (T (s_a + s_b) - 2 s_a s_b), all in exact ints
    num = 2 * (total * sum_ij - sum_a * sum_b)
    den = total * (sum_a + sum_b) - 2 * sum_a * sum_b
    if den == 0:
        return 1.0 if num == 0 else 0.0
    return num / den


def rmse_centers(est, truth) -> float:
    """Root-mean-squared centroid error, minimized over column permutations.

    Accepts `core.Centroids` or raw p x C arrays; exact alignment by brute
    force for C <= 8 and by Hungarian assignment otherwise.
    """
    est = np.asarray(getattr(est, "m", est), dtype=float)
    truth = np.asarray(getattr(truth, "m", truth), dtype=float)
    if est.shape != truth.shape:
        raise ValueError(f"centroid shapes differ: {est.shape} vs {truth.shape}")
    c = est.shape[1]
    cost = np.zeros((c, c))
    for i in range(c):
        diff = est[:, i][:, None] - truth
        cost[i] = np.sum(diff * diff, axis=0)
    if c <= 8:
        best = min(sum(cost[i, p] for i, p in enumerate(perm)) for perm in permutations(range(c)))
    else:
        rows, cols = linear_sum_assignment(cost)
        best = float(cost[rows, cols].sum())
    return float(np.sqrt(best / c))


def outlier_prf(flagged, truth) -> tuple:
    """Precision, recall, and F1 of a flagged-outlier set against the truth.

    With no positives anywhere (nothing flagged, nothing true) all three are
    1.0 by convention; an empty flagged set otherwise has precision 1, recall 0.
    """
    flagged = np.asarray(flagged, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if flagged.shape != truth.shape:
        raise ValueError("flag vectors must have equal length")
    tp = int(np.count_nonzero(flagged & truth))
    fp = int(np.count_nonzero(flagged & ~truth))
    fn = int(np.count_nonzero(~flagged & truth))
    if tp == 0 and fp == 0 and fn == 0:
        return (1.0, 1.0, 1.0)
    precision = tp / (tp + fp) if (tp + fp) else 1.0
    recall = tp / (tp + fn) if (tp + fn) else 1.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
    return (precision, recall, f1)
