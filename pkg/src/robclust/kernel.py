"""Kernel construction and kernelized robust clustering.

The kernelized fits never touch raw coordinates: centroids, residuals, and
outliers are carried as coefficient matrices B (N x C), Delta (N x N), and
A (N x N) whose implied vectors live in the span of the mapped data, and all
geometry is evaluated through quadratic forms in the kernel matrix.  Because
Delta is the identity minus a rank-C term, products with K cost O(N^2 C) per
cycle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import (
    Centroids,
    DataSet,
    DegenerateSigmaError,
    FitConfig,
    FitResult,
    Membership,
    OutlierState,
    gaussian_logpdf_spherical,
    penalty_term,
)
from .linalg import min_eigenvalue, symmetric_eigh
from .rkm import random_membership

__all__ = [
    "KernelMatrix",
    "KernelState",
    "gram_linear",
    "kernel_gaussian",
    "kernel_polynomial",
    "kernel_graph",
    "alpha_kappa_heuristic",
    "krkm_fit",
    "krpc_fit",
    "spectral_init",
    "reconstruct_centroids",
    "reconstruct_outliers",
]

SYM_TOL = 1e-9
PSD_TOL = 1e-8


@dataclass(frozen=True)
class KernelMatrix:
    """Symmetric positive-semidefinite N x N similarity matrix.

    Symmetry and (tolerance-relaxed) positive semidefiniteness are checked at
    construction; fits reuse the cached smallest eigenvalue instead of
    re-validating.
    """

    k: np.ndarray
    min_eig: float = 0.0

    def __post_init__(self):
        k = np.array(self.k, dtype=float)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise ValueError("kernel matrix must be square")
        scale = max(1.0, float(np.abs(k).max(initial=0.0)))
        if np.abs(k - k.T).max(initial=0.0) > SYM_TOL * scale:
            raise ValueError("kernel matrix is not symmetric")
        k = 0.5 * (k + k.T)
        k.setflags(write=False)
        object.__setattr__(self, "k", k)
        floor = -PSD_TOL * max(float(np.trace(k)) / k.shape[0], 1e-300)
        me = min_eigenvalue(k)
        if me < floor:
            raise ValueError(f"kernel matrix is not PSD (min eigenvalue {me:.3e})")
        object.__setattr__(self, "min_eig", me)

    @property
    def n(self) -> int:
        return self.k.shape[0]


@dataclass(frozen=True)
class KernelState:
    """Coefficient matrices of a kernel-space fit: outliers A (N x N),
    centroids B (N x C), residuals Delta (N x N)."""

    a: np.ndarray
    b: np.ndarray
    delta: np.ndarray


def gram_linear(x: DataSet) -> KernelMatrix:
    """Plain Grammian of the data points: entry (n, m) is x_n . x_m."""
    return KernelMatrix(x.x @ x.x.T)


def _pairwise_sq_dists(x: np.ndarray) -> np.ndarray:
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def kernel_gaussian(x: DataSet, alpha: float) -> KernelMatrix:
    """Gaussian kernel exp(-alpha ||x_n - x_m||^2); unit diagonal."""
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    return KernelMatrix(np.exp(-alpha * _pairwise_sq_dists(x.x)))


def kernel_polynomial(x: DataSet, degree: int) -> KernelMatrix:
    """Homogeneous polynomial kernel (x_n . x_m)^degree."""
    if degree < 1:
        raise ValueError("degree must be >= 1")
    return KernelMatrix((x.x @ x.x.T) ** degree)


def alpha_kappa_heuristic(x: DataSet) -> float:
    """Gaussian-kernel scale: the inverse median pairwise squared distance."""
    if x.n < 2:
        raise ValueError("need at least two points")
    d2 = _pairwise_sq_dists(x.x)
    med = float(np.median(d2[np.triu_indices(x.n, k=1)]))
    if med <= 0:
        raise ValueError("all points identical; kernel scale undefined")
    return 1.0 / med


def _normalized_adjacency(adjacency, binary: bool = True) -> np.ndarray:
    e = np.array(adjacency, dtype=float)
    if e.ndim != 2 or e.shape[0] != e.shape[1]:
        raise ValueError("adjacency must be square")
    if np.abs(e - e.T).max(initial=0.0) > 0:
        raise ValueError("adjacency must be symmetric")
    if binary and not np.all((e == 0.0) | (e == 1.0)):
        raise ValueError("adjacency must be 0/1")
    if not binary and np.any(e < 0.0):
        raise ValueError("similarities must be nonnegative")
    np.fill_diagonal(e, 0.0)
    deg = e.sum(axis=1)
    isolated = np.nonzero(deg == 0)[0]
    if isolated.size:
        raise ValueError(f"isolated node {int(isolated[0])} (degree 0)")
    scale = 1.0 / np.sqrt(deg)
    return e * scale[:, None] * scale[None, :]


def kernel_graph(adjacency, nu_margin: float = 1e-3) -> KernelMatrix:
    """Shifted normalized adjacency nu*I + D^{-1/2} E D^{-1/2}, nu chosen to
    exceed the most negative eigenvalue by ``nu_margin`` so the result is
    strictly positive definite."""
    if nu_margin <= 0:
        raise ValueError("nu_margin must be > 0")
    s = _normalized_adjacency(adjacency)
    nu = abs(min_eigenvalue(s)) + nu_margin
    return KernelMatrix(nu * np.eye(s.shape[0]) + s)


def _connected(e: np.ndarray) -> bool:
    n = e.shape[0]
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.nonzero(e[i] > 0)[0]:
            if not seen[j]:
                seen[j] = True
                stack.append(int(j))
    return bool(seen.all())


def spectral_init(adjacency, c: int, seed: int = 0, binary: bool = True) -> Membership:
    """Hard initial memberships from spectral clustering of a similarity graph.

    Embeds the nodes with the ``c`` lowest eigenvectors of the symmetric
    normalized Laplacian, row-normalizes, and runs plain hard K-means on the
    embedding.  ``adjacency`` is a 0/1 edge matrix by default; pass
    ``binary=False`` to use any symmetric nonnegative similarity matrix
    (e.g. a Gaussian kernel) as the weighted graph.
    """
    from .rkm import rkm_fit

    s = _normalized_adjacency(adjacency, binary=binary)
    if binary and not _connected(np.asarray(adjacency, dtype=float)):
        warnings.warn("graph is not connected; spectral embedding may split components")
    lap = np.eye(s.shape[0]) - s
    _, vecs = symmetric_eigh(lap)
    emb = vecs[:, :c]
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    emb = np.divide(emb, norms, out=emb.copy(), where=norms > 0)
    cfg = FitConfig(lam=math.inf, q=1.0, seed=seed)
    return rkm_fit(DataSet(emb), c, cfg).memberships


def reconstruct_centroids(x: DataSet, state: KernelState) -> Centroids:
    """Explicit centroids X B; meaningful for the linear kernel only."""
    return Centroids(x.x.T @ state.b)


def reconstruct_outliers(x: DataSet, state: KernelState) -> OutlierState:
    """Explicit outlier matrix X A; meaningful for the linear kernel only."""
    return OutlierState.from_matrix(x.x.T @ state.a)


def _kernel_sq_dists(k, ka, kb, a, b):
    """N x C matrix of ||e_n - beta_c - alpha_n||_K^2 via cached K products."""
    n = k.shape[0]
    w = np.eye(n) - a
    kw = k - ka
    wkw = np.einsum("in,in->n", w, kw)
    cross = w.T @ kb
    bkb = np.einsum("ic,ic->c", b, kb)
    sq = wkw[:, None] - 2.0 * cross + bkb[None, :]
    np.maximum(sq, 0.0, out=sq)
    return sq


def _soft_from_distances(d: np.ndarray, q: float) -> Membership:
    u = np.zeros_like(d)
    zero_rows = np.any(d == 0.0, axis=1)
    if np.any(zero_rows):
        u[zero_rows, np.argmax(d[zero_rows] == 0.0, axis=1)] = 1.0
    pos = ~zero_rows
    if np.any(pos):
        z = -np.log(d[pos]) / (q - 1.0)
        z -= z.max(axis=1, keepdims=True)
        w = np.exp(z)
        u[pos] = w / w.sum(axis=1, keepdims=True)
    return Membership(u, q=q, mode="soft")


def _hard_from_distances(d: np.ndarray) -> Membership:
    u = np.zeros_like(d)
    u[np.arange(d.shape[0]), np.argmin(d, axis=1)] = 1.0
    return Membership(u, q=1.0, mode="hard")


def _repair_empty_kernel(u: Membership, sq: np.ndarray):
    """Reassign the point farthest from its own centroid to each empty cluster."""
    mass = u.uq.sum(axis=0)
    empty = np.nonzero(mass <= 0.0)[0]
    if empty.size == 0:
        return u, False
    mat = u.u.copy()
    for c in empty:
        own = sq[np.arange(sq.shape[0]), np.argmax(mat, axis=1)]
        pick = int(np.argmax(own))
        mat[pick] = 0.0
        mat[pick, c] = 1.0
    return Membership(mat, q=u.q, mode=u.mode), True


def _shrink_factors(norms: np.ndarray, thr) -> np.ndarray:
    ratio = np.divide(
        np.asarray(thr, dtype=float), norms, out=np.ones_like(norms), where=norms > 0.0
    )
    return np.maximum(1.0 - ratio, 0.0)


def krkm_fit(k: KernelMatrix, c: int, cfg: FitConfig, init=None) -> FitResult:
    """Kernelized robust K-means on coefficient matrices.

    Per cycle: B from the weighted memberships, Delta as the residual
    coefficients, A by block soft-thresholding of the kernel residual norms at
    lam/2, then the membership update from the kernel-space distances.  Stops
    when the K-norm change of B falls below ``cfg.eps_stop``.
    """
    if c < 1:
        raise ValueError("need at least one cluster")
    kmat = k.k
    n = k.n
    if init is None:
        u = random_membership(np.random.default_rng(cfg.seed), n, c, cfg.q)
        a = np.zeros((n, n))
        b_prev = None
    elif isinstance(init, Membership):
        if init.n != n or init.c != c:
            raise ValueError("init membership has wrong shape")
        u = init
        a = np.zeros((n, n))
        b_prev = None
    elif isinstance(init, FitResult) and init.kernel_state is not None:
        u = init.memberships
        a = init.kernel_state.a
        b_prev = init.kernel_state.b
    else:
        raise TypeError("init must be None, a Membership, or a kernel-space FitResult")

    ka = kmat @ a if np.any(a) else np.zeros((n, n))
    trace = []
    repairs = []
    converged = False
    iterations = 0
    delta = None
    alpha_norms = np.zeros(n)
    for t in range(1, cfg.max_iters + 1):
        flags_before = alpha_norms > 0.0
        uq = u.uq
        mass = uq.sum(axis=0)
        b = (uq - a @ uq) / mass
        kb = kmat @ b
        row_mass = uq.sum(axis=1)
        scaled = (uq / row_mass[:, None]).T  # C x N
        delta = np.eye(n) - b @ scaled
        kdelta = kmat - kb @ scaled
        delta_norms = np.sqrt(np.maximum(np.einsum("in,in->n", delta, kdelta), 0.0))
        if math.isinf(cfg.lam):
            factors = np.zeros(n)
        else:
            factors = _shrink_factors(delta_norms, 0.5 * cfg.lam)
        a = delta * factors[None, :]
        ka = kdelta * factors[None, :]
        alpha_norms = delta_norms * factors
        sq = _kernel_sq_dists(kmat, ka, kb, a, b)
        d = sq + penalty_term(cfg.lam, alpha_norms)[:, None]
        u = _hard_from_distances(sq) if cfg.q == 1.0 else _soft_from_distances(d, cfg.q)
        u, fixed = _repair_empty_kernel(u, sq)
        if fixed:
            repairs.append(t)
        trace.append(float(np.sum(u.uq * d)))
        iterations = t
        if b_prev is not None and np.array_equal(alpha_norms > 0.0, flags_before):
            diff = b - b_prev
            num = float(np.einsum("ic,ic->", diff, kmat @ diff))
            den = float(np.einsum("ic,ic->", b, kb))
            if num <= cfg.eps_stop**2 * den or (den == 0.0 and num == 0.0):
                converged = True
                b_prev = b
                break
        b_prev = b
    return FitResult(
        memberships=u,
        outlier_norms=alpha_norms,
        cost_trace=np.asarray(trace),
        iterations=iterations,
        converged=converged,
        kernel_state=KernelState(a=a, b=b_prev, delta=delta),
        repairs=tuple(repairs),
    )


def _kernel_data_scale_sq(kmat: np.ndarray) -> float:
    """Mean squared distance of the mapped points to their mean, per kernel dim."""
    n = kmat.shape[0]
    return max(float(np.trace(kmat)) / n - float(kmat.mean()), 0.0) / n


def krpc_fit(k: KernelMatrix, c: int, cfg: FitConfig, init=None) -> FitResult:
    """Kernelized robust probabilistic clustering (EM in the empirical feature
    space of dimension N).

    Densities are spherical Gaussians in dimension N evaluated through kernel
    quadratic forms; the deviation update uses the same quadratic root as the
    raw-space fit with p replaced by N.
    """
    if c < 1:
        raise ValueError("need at least one cluster")
    if cfg.lam <= 0:
        raise ValueError("krpc requires lam > 0")
    kmat = k.k
    n = k.n
    if init is None:
        rng = np.random.default_rng(cfg.seed)
        picks = rng.choice(n, size=c, replace=False)
        b = np.zeros((n, c))
        b[picks, np.arange(c)] = 1.0
        pi = np.full(c, 1.0 / c)
        sigma = math.sqrt(max(_kernel_data_scale_sq(kmat), 1e-300))
        a = np.zeros((n, n))
    elif isinstance(init, Membership):
        if init.n != n or init.c != c:
            raise ValueError("init membership has wrong shape")
        counts = init.u.sum(axis=0)
        b = init.u / np.maximum(counts, 1.0)[None, :]
        pi = counts / n
        sigma = math.sqrt(max(_kernel_data_scale_sq(kmat), 1e-300))
        a = np.zeros((n, n))
    elif isinstance(init, FitResult) and init.kernel_state is not None:
        b = init.kernel_state.b
        a = init.kernel_state.a
        pi = init.pi
        sigma = init.sigma
    else:
        raise TypeError("init must be None, a Membership, or a kernel-space FitResult")

    floor = 1e-6 * math.sqrt(max(_kernel_data_scale_sq(kmat), 1e-300))
    ka = kmat @ a if np.any(a) else np.zeros((n, n))
    kb = kmat @ b
    trace = []
    converged = False
    degenerate = False
    iterations = 0
    gamma = None
    alpha_norms = np.zeros(n)
    delta = None
    for t in range(1, cfg.max_iters + 1):
        # E-step from the previous cycle's coefficients
        sq = _kernel_sq_dists(kmat, ka, kb, a, b)
        with np.errstate(divide="ignore"):
            logw = np.log(pi)[None, :] + gaussian_logpdf_spherical(sq, sigma, n)
        logw -= logw.max(axis=1, keepdims=True)
        gamma = np.exp(logw)
        gamma /= gamma.sum(axis=1, keepdims=True)
        # M-step
        pi = gamma.mean(axis=0)
        b = (gamma - a @ gamma) / np.maximum(n * pi, 1e-300)[None, :]
        kb = kmat @ b
        delta = np.eye(n) - b @ gamma.T
        kdelta = kmat - kb @ gamma.T
        delta_norms = np.sqrt(np.maximum(np.einsum("in,in->n", delta, kdelta), 0.0))
        if math.isinf(cfg.lam):
            factors = np.zeros(n)
        else:
            factors = _shrink_factors(delta_norms, cfg.lam * sigma)
        a = delta * factors[None, :]
        ka = kdelta * factors[None, :]
        alpha_norms = delta_norms * factors
        sq = _kernel_sq_dists(kmat, ka, kb, a, b)
        bterm = float(np.sum(gamma * sq)) / (n * n)
        linear = float(np.sum(penalty_term(cfg.lam, alpha_norms)))
        avg = linear / (2.0 * n * n)
        if bterm == 0.0 and avg <= 0.0:
            sigma = floor
            degenerate = True
        else:
            sigma = avg + math.sqrt(bterm + avg * avg)
            if sigma < floor:
                sigma = floor
                degenerate = True
        with np.errstate(divide="ignore"):
            logw = np.log(pi)[None, :] + gaussian_logpdf_spherical(sq, sigma, n)
        loglik = float(np.sum(logsumexp(logw, axis=1)))
        reg = float(np.sum(penalty_term(cfg.lam, alpha_norms))) / sigma
        trace.append(-loglik + reg)
        iterations = t
        if t > 1 and abs(trace[-2] - trace[-1]) <= cfg.eps_stop * max(abs(trace[-1]), 1e-300):
            converged = True
            break
    memberships = Membership(gamma, q=1.0, mode="soft")
    return FitResult(
        memberships=memberships,
        outlier_norms=alpha_norms,
        cost_trace=np.asarray(trace),
        iterations=iterations,
        converged=converged,
        kernel_state=KernelState(a=a, b=b, delta=delta),
        pi=pi,
        sigma=sigma,
        degenerate=degenerate,
    )
