"""Shared data model, validation, and objective functions.

All clustering algorithms in this package operate on the same small set of
value types: an immutable point matrix (`DataSet`), a row-stochastic
assignment matrix (`Membership`), cluster centers (`Centroids`), a per-point
outlier matrix with cached column norms (`OutlierState`), and a run
configuration (`FitConfig`).  Fits return a `FitResult`.

Conventions: data points are rows of ``DataSet.x`` (N x p), while centroids
and outliers are stored column-per-cluster (p x C) and column-per-point
(p x N).  A point is declared an outlier iff its outlier column has a
strictly positive norm, which the thresholding operators produce exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "DataSet",
    "Membership",
    "Centroids",
    "OutlierState",
    "FitConfig",
    "FitResult",
    "MembershipReport",
    "EmptyClusterError",
    "DegenerateSigmaError",
    "rkm_cost",
    "rpc_objective",
    "validate_membership",
    "penalty_term",
]

ROW_SUM_TOL = 1e-9


class EmptyClusterError(ValueError):
    """A cluster received zero total membership mass."""

    def __init__(self, cluster: int):
        self.cluster = cluster
        super().__init__(f"cluster {cluster} has zero membership mass")


class DegenerateSigmaError(ValueError):
    """All residuals vanished; the spherical deviation collapsed to zero."""


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DataSet:
    """N x p point matrix with optional ground-truth labels and outlier flags."""

    x: np.ndarray
    truth_labels: np.ndarray | None = None
    truth_outliers: np.ndarray | None = None

    def __post_init__(self):
        x = _readonly(self.x)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError(f"x must be a nonempty 2-D matrix, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("x contains non-finite entries")
        object.__setattr__(self, "x", x)
        if self.truth_labels is not None:
            labels = np.asarray(self.truth_labels, dtype=int).copy()
            if labels.shape != (x.shape[0],):
                raise ValueError("truth_labels must have length N")
            labels.setflags(write=False)
            object.__setattr__(self, "truth_labels", labels)
        if self.truth_outliers is not None:
            flags = np.asarray(self.truth_outliers, dtype=bool).copy()
            if flags.shape != (x.shape[0],):
                raise ValueError("truth_outliers must have length N")
            flags.setflags(write=False)
            object.__setattr__(self, "truth_outliers", flags)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class Membership:
    """N x C assignment matrix; hard rows are indicators, soft rows lie on the simplex."""

    u: np.ndarray
    q: float = 1.0
    mode: str = "hard"

    def __post_init__(self):
        u = _readonly(self.u)
        if u.ndim != 2:
            raise ValueError("u must be 2-D")
        if self.mode not in ("hard", "soft"):
            raise ValueError(f"mode must be 'hard' or 'soft', got {self.mode!r}")
        if self.q < 1.0:
            raise ValueError("q must be >= 1")
        if np.any(u < -ROW_SUM_TOL) or np.any(u > 1.0 + ROW_SUM_TOL):
            raise ValueError("membership entries must lie in [0, 1]")
        rowsums = u.sum(axis=1)
        if np.any(np.abs(rowsums - 1.0) > ROW_SUM_TOL):
            bad = int(np.argmax(np.abs(rowsums - 1.0)))
            raise ValueError(f"row {bad} sums to {rowsums[bad]!r}, expected 1")
        if self.mode == "hard" and not np.all((u == 0.0) | (u == 1.0)):
            raise ValueError("hard membership entries must be 0 or 1")
        object.__setattr__(self, "u", u)

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def c(self) -> int:
        return self.u.shape[1]

    @property
    def uq(self) -> np.ndarray:
        """Entrywise q-th power of the membership matrix."""
        if self.q == 1.0:
            return self.u
        return self.u**self.q

    def labels(self) -> np.ndarray:
        """Hard labels by row argmax (ties broken toward the lowest index)."""
        return np.argmax(self.u, axis=1)


@dataclass(frozen=True)
class Centroids:
    """p x C matrix of cluster centers, one column per cluster."""

    m: np.ndarray

    def __post_init__(self):
        m = _readonly(self.m)
        if m.ndim != 2:
            raise ValueError("m must be 2-D (p x C)")
        if not np.all(np.isfinite(m)):
            raise ValueError("centroids contain non-finite entries")
        object.__setattr__(self, "m", m)

    @property
    def p(self) -> int:
        return self.m.shape[0]

    @property
    def c(self) -> int:
        return self.m.shape[1]


@dataclass(frozen=True)
class OutlierState:
    """p x N outlier matrix with cached column norms; column n nonzero iff point n is flagged."""

    o: np.ndarray
    norms: np.ndarray

    def __post_init__(self):
        o = _readonly(self.o)
        norms = _readonly(self.norms)
        if o.ndim != 2 or norms.shape != (o.shape[1],):
            raise ValueError("o must be p x N with one cached norm per column")
        object.__setattr__(self, "o", o)
        object.__setattr__(self, "norms", norms)

    @classmethod
    def zeros(cls, p: int, n: int) -> "OutlierState":
        return cls(np.zeros((p, n)), np.zeros(n))

    @classmethod
    def from_matrix(cls, o: np.ndarray) -> "OutlierState":
        o = np.asarray(o, dtype=float)
        return cls(o, np.linalg.norm(o, axis=0))

    @property
    def flagged(self) -> np.ndarray:
        return self.norms > 0.0

    @property
    def n_flagged(self) -> int:
        return int(np.count_nonzero(self.norms > 0.0))


@dataclass(frozen=True)
class FitConfig:
    """Run configuration shared by all fitting algorithms.

    ``lam`` is the outlier-controlling weight (``math.inf`` disables outlier
    updates entirely, recovering the non-robust baseline).  ``reweight_epsilon``
    of ``None`` selects the data-driven default when reweighting is on.
    """

    lam: float = 1.0
    max_iters: int = 300
    eps_stop: float = 1e-6
    seed: int = 0
    q: float = 1.0
    reweight: bool = False
    reweight_epsilon: float | None = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.eps_stop <= 0:
            raise ValueError("eps_stop must be > 0")
        if self.q < 1.0:
            raise ValueError("q must be >= 1")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must fit in 64 bits")
        if self.reweight and self.reweight_epsilon is not None and self.reweight_epsilon <= 0:
            raise ValueError("reweight_epsilon must be > 0 when reweighting")

    @property
    def mode(self) -> str:
        return "hard" if self.q == 1.0 else "soft"

    def with_lam(self, lam: float) -> "FitConfig":
        return replace(self, lam=lam)


@dataclass(frozen=True)
class FitResult:
    """Converged (or iteration-capped) state of a fit.

    ``outlier_norms`` is always populated (for kernelized fits it holds the
    kernel-space norms), so downstream code can flag outliers uniformly.
    """

    memberships: Membership
    outlier_norms: np.ndarray
    cost_trace: np.ndarray
    iterations: int
    converged: bool
    centroids: Centroids | None = None
    outliers: OutlierState | None = None
    kernel_state: "object | None" = None
    pi: np.ndarray | None = None
    sigma: float | None = None
    degenerate: bool = False
    repairs: tuple = ()

    @property
    def labels(self) -> np.ndarray:
        return self.memberships.labels()

    @property
    def flagged(self) -> np.ndarray:
        return self.outlier_norms > 0.0

    @property
    def n_flagged(self) -> int:
        return int(np.count_nonzero(self.outlier_norms > 0.0))

    @property
    def final_cost(self) -> float:
        return float(self.cost_trace[-1])


@dataclass(frozen=True)
class MembershipReport:
    """Diagnostic output of `validate_membership`: errors are hard violations,
    empty clusters are reported as warnings only."""

    errors: tuple = ()
    warnings: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.errors


def penalty_term(lam, norms: np.ndarray) -> np.ndarray:
    """Per-point penalty lam * ||o_n||, with lam*0 == 0 even for infinite lam."""
    lam = np.broadcast_to(np.asarray(lam, dtype=float), norms.shape)
    out = np.zeros_like(norms)
    active = norms > 0.0
    out[active] = lam[active] * norms[active]
    return out


def _check_dims(x: DataSet, u: Membership, m: Centroids, o: OutlierState):
    if u.n != x.n:
        raise ValueError(f"membership rows ({u.n}) != points ({x.n})")
    if m.c != u.c:
        raise ValueError(f"centroid columns ({m.c}) != clusters ({u.c})")
    if m.p != x.p or o.o.shape != (x.p, x.n):
        raise ValueError("centroid/outlier dimensions inconsistent with data")


def augmented_distances(x: DataSet, m: Centroids, o: OutlierState, lam) -> np.ndarray:
    """N x C matrix of ||x_n - m_c - o_n||^2 + lam_n * ||o_n||."""
    xo = x.x - o.o.T  # N x p, outlier-compensated points
    sq = (
        np.sum(xo * xo, axis=1)[:, None]
        - 2.0 * xo @ m.m
        + np.sum(m.m * m.m, axis=0)[None, :]
    )
    np.maximum(sq, 0.0, out=sq)
    return sq + penalty_term(lam, o.norms)[:, None]


def rkm_cost(x: DataSet, u: Membership, m: Centroids, o: OutlierState, lam: float) -> float:
    """Robust K-means objective: sum_{n,c} u_nc^q (||x_n-m_c-o_n||^2 + lam ||o_n||)."""
    _check_dims(x, u, m, o)
    d = augmented_distances(x, m, o, lam)
    return float(np.sum(u.uq * d))


def gaussian_logpdf_spherical(sq_dists: np.ndarray, sigma: float, dim: int) -> np.ndarray:
    """Log N(x; mu, sigma^2 I_dim) given squared distances ||x - mu||^2."""
    return -0.5 * dim * math.log(2.0 * math.pi * sigma * sigma) - sq_dists / (2.0 * sigma * sigma)


def rpc_objective(x: DataSet, params, lam: float) -> float:
    """Regularized negative log-likelihood of the spherical outlier-aware mixture.

    ``params`` is an ``rpc.MixtureParams``.  The regularizer is
    lam * sum_n ||o_n|| / sigma (the covariance-scaled norm for sigma^2 I).
    """
    from scipy.special import logsumexp

    if params.sigma <= 0:
        raise ValueError("sigma must be > 0")
    sq = augmented_distances(x, params.m, params.o, 0.0)
    logp = gaussian_logpdf_spherical(sq, params.sigma, x.p)
    with np.errstate(divide="ignore"):
        logw = np.log(params.pi)[None, :] + logp
    loglik = float(np.sum(logsumexp(logw, axis=1)))
    reg = float(np.sum(penalty_term(lam, params.o.norms))) / params.sigma
    return -loglik + reg


def validate_membership(u, mode: str | None = None) -> MembershipReport:
    """Check constraints on a membership matrix, reporting every violation.

    ``u`` may be a `Membership` or a raw N x C array (with ``mode`` given).
    Errors carry ``(constraint, index)`` pairs: c1 binary entries (hard mode),
    c3 unit row sums, c4 box bounds.  An empty cluster (c2) is a warning with
    the offending column, since it is checked post hoc rather than enforced.
    """
    if isinstance(u, Membership):
        mat, mode = u.u, u.mode
    else:
        mat = np.asarray(u, dtype=float)
        mode = mode or "soft"
    errors = []
    warnings = []
    rowsums = mat.sum(axis=1)
    for n in np.nonzero(np.abs(rowsums - 1.0) > ROW_SUM_TOL)[0]:
        errors.append(("c3", int(n)))
    for n in np.nonzero(np.any((mat < 0.0) | (mat > 1.0), axis=1))[0]:
        errors.append(("c4", int(n)))
    if mode == "hard":
        for n in np.nonzero(np.any((mat != 0.0) & (mat != 1.0), axis=1))[0]:
            errors.append(("c1", int(n)))
    for c in np.nonzero(mat.sum(axis=0) == 0.0)[0]:
        warnings.append(("c2", int(c)))
    return MembershipReport(errors=tuple(errors), warnings=tuple(warnings))
