"""Robust hard/soft K-means via block coordinate descent, with optional
majorization-minimization reweighting.

One cycle updates, in order: centroids (weighted least squares), outliers
(block soft-thresholding of the weighted residuals at threshold lam/2), and
memberships (closed-form soft rule for q > 1, minimum distance for q = 1).
All entries of the membership matrix are recomputed each cycle; the outlier
matrix stays exactly zero for points whose residual norm is at or below the
threshold, which makes the flagged set unambiguous.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .core import (
    Centroids,
    DataSet,
    EmptyClusterError,
    FitConfig,
    FitResult,
    Membership,
    OutlierState,
    augmented_distances,
    penalty_term,
    rkm_cost,
)

__all__ = [
    "update_centroids",
    "compute_residuals",
    "shrink_outliers",
    "update_memberships_soft",
    "update_memberships_hard",
    "reweight",
    "default_reweight_epsilon",
    "rkm_fit",
    "wrkm_fit",
    "rkm_weighted_cost",
    "random_membership",
]

log = logging.getLogger(__name__)


def random_membership(rng: np.random.Generator, n: int, c: int, q: float) -> Membership:
    """Random initial memberships: uniform hard assignments (all clusters kept
    nonempty in one repair pass) for q = 1, normalized uniform rows otherwise."""
    if q == 1.0:
        labels = rng.integers(0, c, size=n)
        # one pass to guarantee every cluster is nonempty
        for cluster in range(c):
            if not np.any(labels == cluster):
                counts = np.bincount(labels, minlength=c)
                donors = np.nonzero(counts[labels] > 1)[0]
                labels[donors[rng.integers(0, donors.size)]] = cluster
        u = np.zeros((n, c))
        u[np.arange(n), labels] = 1.0
        return Membership(u, q=1.0, mode="hard")
    u = rng.uniform(size=(n, c))
    u /= u.sum(axis=1, keepdims=True)
    return Membership(u, q=q, mode="soft")


def update_centroids(x: DataSet, u: Membership, o: OutlierState) -> Centroids:
    """Weighted means of the outlier-compensated points, one column per cluster."""
    uq = u.uq
    mass = uq.sum(axis=0)
    for c in np.nonzero(mass <= 0.0)[0]:
        raise EmptyClusterError(int(c))
    compensated = x.x - o.o.T
    return Centroids(compensated.T @ uq / mass)


def compute_residuals(x: DataSet, m: Centroids, u: Membership) -> np.ndarray:
    """p x N membership-weighted residuals r_n = x_n - (sum_c u_nc^q m_c) / (sum_c u_nc^q)."""
    uq = u.uq
    mass = uq.sum(axis=1)
    return x.x.T - (m.m @ uq.T) / mass


def shrink_outliers(r: np.ndarray, lam) -> OutlierState:
    """Block soft-thresholding: o_n = r_n [1 - lam_n / (2 ||r_n||)]_+.

    ``lam`` is a scalar or a length-N vector of per-point weights.  Column n
    is exactly zero iff ||r_n|| <= lam_n / 2.
    """
    norms = np.linalg.norm(r, axis=0)
    thr = 0.5 * np.asarray(lam, dtype=float)
    ratio = np.divide(thr, norms, out=np.ones_like(norms), where=norms > 0.0)
    factor = np.maximum(1.0 - ratio, 0.0)
    return OutlierState(r * factor, norms * factor)


def update_memberships_soft(
    x: DataSet, m: Centroids, o: OutlierState, lam: float, q: float
) -> Membership:
    """Closed-form soft assignment from the outlier-augmented distances.

    A zero augmented distance (point coinciding with its compensated
    centroid) gets the full unit membership on the first such cluster.
    """
    if q <= 1.0:
        raise ValueError("soft update requires q > 1")
    d = augmented_distances(x, m, o, lam)
    u = np.zeros_like(d)
    zero_rows = np.any(d == 0.0, axis=1)
    if np.any(zero_rows):
        u[zero_rows, np.argmax(d[zero_rows] == 0.0, axis=1)] = 1.0
    pos = ~zero_rows
    if np.any(pos):
        # log domain: d^{-1/(q-1)} overflows for q close to 1
        z = -np.log(d[pos]) / (q - 1.0)
        z -= z.max(axis=1, keepdims=True)
        w = np.exp(z)
        u[pos] = w / w.sum(axis=1, keepdims=True)
    return Membership(u, q=q, mode="soft")


def update_memberships_hard(x: DataSet, m: Centroids, o: OutlierState) -> Membership:
    """Minimum-distance rule on compensated points; ties go to the lowest index."""
    d = augmented_distances(x, m, o, 0.0)
    u = np.zeros_like(d)
    u[np.arange(d.shape[0]), np.argmin(d, axis=1)] = 1.0
    return Membership(u, q=1.0, mode="hard")


def reweight(o_prev: OutlierState, lam: float, epsilon: float) -> np.ndarray:
    """Per-point weights lam_n = lam / (||o_n|| + epsilon) for the MM surrogate."""
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    return lam / (o_prev.norms + epsilon)


def default_reweight_epsilon(o_warm: OutlierState) -> float:
    """Data-driven epsilon: 1e-2 x median nonzero ||o_n||, floored at 1e-6."""
    nonzero = o_warm.norms[o_warm.norms > 0.0]
    if nonzero.size == 0:
        return 1e-6
    return max(1e-2 * float(np.median(nonzero)), 1e-6)


def rkm_weighted_cost(
    x: DataSet, u: Membership, m: Centroids, o: OutlierState, lam: float, epsilon: float
) -> float:
    """Reweighted objective: the lam ||o_n|| penalty replaced by lam log(||o_n|| + eps)."""
    d = augmented_distances(x, m, o, 0.0)
    d += lam * np.log(o.norms + epsilon)[:, None]
    return float(np.sum(u.uq * d))


def _resolve_init(x, c, cfg, init):
    if init is None:
        rng = np.random.default_rng(cfg.seed)
        u = random_membership(rng, x.n, c, cfg.q)
        return u, OutlierState.zeros(x.p, x.n), None
    if isinstance(init, Membership):
        if init.n != x.n or init.c != c:
            raise ValueError("init membership has wrong shape")
        return init, OutlierState.zeros(x.p, x.n), None
    if isinstance(init, FitResult):
        if init.outliers is None or init.centroids is None:
            raise ValueError("warm start requires a raw-space FitResult")
        return init.memberships, init.outliers, init.centroids
    raise TypeError(f"unsupported init: {type(init).__name__}")


def _repair_empty(u: Membership, x: DataSet, o: OutlierState, m: Centroids | None):
    """Reassign the worst-fit point to each empty cluster; returns (u, repaired).

    Donors must come from clusters with at least two members, and a point is
    never moved twice in one pass, so repairing several clusters cannot
    re-empty another.
    """
    mat = u.u
    mass = u.uq.sum(axis=0)
    empty = np.nonzero(mass <= 0.0)[0]
    if empty.size == 0:
        return u, False
    mat = mat.copy()
    moved: set[int] = set()
    for c in empty:
        labels = np.argmax(mat, axis=1)
        counts = np.bincount(labels, minlength=mat.shape[1])
        if m is not None:
            compensated = x.x - o.o.T
            dist = np.linalg.norm(compensated - m.m[:, labels].T, axis=1)
        else:
            dist = np.linalg.norm(x.x - x.x.mean(axis=0), axis=1)
        eligible = (counts[labels] > 1) & (~np.isin(np.arange(x.n), list(moved)))
        if not np.any(eligible):
            continue
        pick = int(np.argmax(np.where(eligible, dist, -np.inf)))
        moved.add(pick)
        mat[pick] = 0.0
        mat[pick, c] = 1.0
        log.debug("reseeded empty cluster %d with point %d", c, pick)
    return Membership(mat, q=u.q, mode=u.mode), True


def _bcd_loop(x, c, cfg, u, o, m_prev, lam_for_cycle, cost_fn):
    """Shared BCD loop for plain and reweighted robust K-means."""
    trace = []
    repairs = []
    converged = False
    iterations = 0
    for t in range(1, cfg.max_iters + 1):
        u, fixed = _repair_empty(u, x, o, m_prev)
        if fixed:
            repairs.append(t)
        flags_before = o.flagged
        m = update_centroids(x, u, o)
        lam_t = lam_for_cycle(o)
        if np.all(np.isinf(np.atleast_1d(lam_t))):
            o = OutlierState.zeros(x.p, x.n)
        else:
            o = shrink_outliers(compute_residuals(x, m, u), lam_t)
        if cfg.q == 1.0:
            u = update_memberships_hard(x, m, o)
        else:
            u = update_memberships_soft(x, m, o, cfg.lam, cfg.q)
        u, fixed = _repair_empty(u, x, o, m)
        if fixed:
            repairs.append(t)
        trace.append(cost_fn(x, u, m, o))
        iterations = t
        if m_prev is not None and np.array_equal(o.flagged, flags_before):
            # centroid-change rule; the flag-set guard keeps a warm start at a
            # new lam from stopping on the first (momentarily stationary) cycle
            denom = np.linalg.norm(m.m)
            delta = np.linalg.norm(m.m - m_prev.m)
            if delta <= cfg.eps_stop * denom or (denom == 0.0 and delta == 0.0):
                converged = True
                m_prev = m
                break
        m_prev = m
    return FitResult(
        memberships=u,
        outlier_norms=o.norms,
        cost_trace=np.asarray(trace),
        iterations=iterations,
        converged=converged,
        centroids=m_prev,
        outliers=o,
        repairs=tuple(repairs),
    )


def rkm_fit(x: DataSet, c: int, cfg: FitConfig, init=None) -> FitResult:
    """Robust K-means: BCD on the group-sparse outlier objective.

    ``init`` may be None (seeded random memberships), a `Membership`, or a
    previous `FitResult` (warm start; all blocks carried over).  Stops when
    the relative Frobenius change of the centroid matrix drops to
    ``cfg.eps_stop`` or after ``cfg.max_iters`` cycles.
    """
    if c < 1:
        raise ValueError("need at least one cluster")
    u, o, m_prev = _resolve_init(x, c, cfg, init)

    def cost(x_, u_, m_, o_):
        return rkm_cost(x_, u_, m_, o_, cfg.lam)

    return _bcd_loop(x, c, cfg, u, o, m_prev, lambda o_prev: cfg.lam, cost)


def wrkm_fit(x: DataSet, c: int, cfg: FitConfig, warm: FitResult) -> FitResult:
    """Reweighted robust K-means, warm-started from a converged `rkm_fit`.

    One MM pass per cycle: the thresholds become lam / (||o_n|| + eps) with
    the norms taken from the previous cycle.  The traced objective uses the
    concave log penalty.
    """
    if not cfg.reweight:
        raise ValueError("wrkm_fit requires cfg.reweight=True")
    if warm.outliers is None or warm.centroids is None:
        raise ValueError("warm start must be a raw-space FitResult")
    eps = cfg.reweight_epsilon or default_reweight_epsilon(warm.outliers)
    u, o, m_prev = warm.memberships, warm.outliers, warm.centroids

    def cost(x_, u_, m_, o_):
        return rkm_weighted_cost(x_, u_, m_, o_, cfg.lam, eps)

    return _bcd_loop(
        x, c, cfg, u, o, m_prev, lambda o_prev: reweight(o_prev, cfg.lam, eps), cost
    )
