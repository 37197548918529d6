"""Robust probabilistic clustering: regularized EM for a spherical Gaussian
mixture with deterministic per-point outlier vectors, plus the reweighted
variant.

The E-step computes posteriors in the log domain.  The M-step updates, in
order: mixing weights, means, outliers (block soft-thresholding at threshold
lam * sigma), and the common spherical deviation sigma (positive root of a
quadratic).  The traced objective is the regularized negative log-likelihood,
which is non-increasing per cycle.
"""

from __future__ import annotations

import math
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
    augmented_distances,
    gaussian_logpdf_spherical,
    penalty_term,
    rpc_objective,
)
from .rkm import default_reweight_epsilon, reweight

__all__ = [
    "MixtureParams",
    "Posteriors",
    "e_step",
    "update_pi",
    "update_means_em",
    "shrink_outliers_em",
    "update_sigma",
    "rpc_fit",
    "wrpc_fit",
    "rpc_weighted_objective",
    "data_scale",
]

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class MixtureParams:
    """Spherical mixture parameters: weights on the simplex, p x C means,
    common deviation sigma > 0, and the outlier matrix."""

    pi: np.ndarray
    m: Centroids
    sigma: float
    o: OutlierState

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float).copy()
        if pi.ndim != 1 or pi.shape[0] != self.m.c:
            raise ValueError("pi must be a length-C vector")
        if np.any(pi < -SIMPLEX_TOL) or abs(pi.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError("pi must lie on the probability simplex")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)


@dataclass(frozen=True)
class Posteriors:
    """N x C posterior cluster probabilities, one row per point."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float).copy()
        if g.ndim != 2:
            raise ValueError("gamma must be 2-D")
        if np.any(np.abs(g.sum(axis=1) - 1.0) > SIMPLEX_TOL):
            raise ValueError("posterior rows must sum to 1")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)


def data_scale(x: DataSet) -> float:
    """Per-dimension spread: sqrt of mean squared distance to the global mean / p."""
    centered = x.x - x.x.mean(axis=0)
    return math.sqrt(float(np.mean(np.sum(centered * centered, axis=1))) / x.p)


def e_step(x: DataSet, params: MixtureParams) -> Posteriors:
    """Posterior probabilities of cluster membership, computed in the log domain."""
    sq = augmented_distances(x, params.m, params.o, 0.0)
    logp = gaussian_logpdf_spherical(sq, params.sigma, x.p)
    with np.errstate(divide="ignore"):
        logw = np.log(params.pi)[None, :] + logp
    logw -= logw.max(axis=1, keepdims=True)
    g = np.exp(logw)
    g /= g.sum(axis=1, keepdims=True)
    return Posteriors(g)


def update_pi(gamma: Posteriors) -> np.ndarray:
    """Column means of the posteriors; lies on the simplex."""
    return gamma.gamma.mean(axis=0)


def update_means_em(x: DataSet, gamma: Posteriors, o: OutlierState) -> Centroids:
    """Posterior-weighted means of the outlier-compensated points."""
    g = gamma.gamma
    mass = g.sum(axis=0)
    compensated = x.x - o.o.T
    return Centroids(compensated.T @ g / np.maximum(mass, 1e-300))


def em_residuals(x: DataSet, m: Centroids, gamma: Posteriors) -> np.ndarray:
    """p x N residuals r_n = x_n - sum_c gamma_nc m_c (rows of gamma sum to 1)."""
    return x.x.T - m.m @ gamma.gamma.T


def shrink_outliers_em(
    x: DataSet, m: Centroids, gamma: Posteriors, lam, sigma: float
) -> OutlierState:
    """Block soft-thresholding at threshold lam * sigma on the EM residuals."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    r = em_residuals(x, m, gamma)
    norms = np.linalg.norm(r, axis=0)
    thr = np.asarray(lam, dtype=float) * sigma
    ratio = np.divide(thr, norms, out=np.ones_like(norms), where=norms > 0.0)
    factor = np.maximum(1.0 - ratio, 0.0)
    return OutlierState(r * factor, norms * factor)


def _sigma_root(linear_coeff: float, b: float, n: int, dim: int) -> float:
    """Positive root of  n*dim*sigma^2 - linear_coeff*sigma - n*dim*b = 0."""
    a = linear_coeff / (2.0 * n * dim)
    if b == 0.0 and a <= 0.0:
        raise DegenerateSigmaError("all residuals vanished; sigma collapsed to zero")
    return a + math.sqrt(b + a * a)


def update_sigma(
    x: DataSet, m: Centroids, o: OutlierState, gamma: Posteriors, lam, dim: int | None = None
) -> float:
    """Closed-form spherical deviation update.

    Solves the first-order quadratic in sigma; ``dim`` defaults to the data
    dimension p (the kernelized variant passes N).  ``lam`` may be per-point.
    """
    dim = x.p if dim is None else dim
    sq = augmented_distances(x, m, o, 0.0)
    b = float(np.sum(gamma.gamma * sq)) / (x.n * dim)
    linear = float(np.sum(penalty_term(lam, o.norms)))
    return _sigma_root(linear, b, x.n, dim)


def rpc_weighted_objective(x: DataSet, params: MixtureParams, lam: float, eps: float) -> float:
    """Reweighted objective: the ||o_n||/sigma penalty replaced by log(||o_n||+eps)/sigma."""
    base = rpc_objective(x, params, 0.0)
    return base + lam * float(np.sum(np.log(params.o.norms + eps))) / params.sigma


def _init_params(x: DataSet, c: int, cfg: FitConfig) -> MixtureParams:
    rng = np.random.default_rng(cfg.seed)
    picks = rng.choice(x.n, size=c, replace=False)
    m = Centroids(x.x[picks].T)
    delta = float(np.mean(np.sum((x.x - x.x.mean(axis=0)) ** 2, axis=1))) / x.p
    sigma = math.sqrt(max(delta, 1e-300))
    return MixtureParams(np.full(c, 1.0 / c), m, sigma, OutlierState.zeros(x.p, x.n))


def _em_loop(x, cfg, params, lam_for_cycle, sigma_linear_coeff, objective):
    floor = 1e-6 * data_scale(x)
    trace = []
    converged = False
    degenerate = False
    iterations = 0
    gamma = None
    for t in range(1, cfg.max_iters + 1):
        gamma = e_step(x, params)
        pi = update_pi(gamma)
        m = update_means_em(x, gamma, params.o)
        lam_t = lam_for_cycle(params.o)
        if np.all(np.isinf(np.atleast_1d(lam_t))):
            o = OutlierState.zeros(x.p, x.n)
        else:
            o = shrink_outliers_em(x, m, gamma, lam_t, params.sigma)
        sq = augmented_distances(x, m, o, 0.0)
        b = float(np.sum(gamma.gamma * sq)) / (x.n * x.p)
        try:
            sigma = _sigma_root(sigma_linear_coeff(o), b, x.n, x.p)
        except DegenerateSigmaError:
            sigma = floor
            degenerate = True
        if sigma < floor:
            sigma = floor
            degenerate = True
        params = MixtureParams(pi, m, sigma, o)
        trace.append(objective(params))
        iterations = t
        if t > 1:
            prev, cur = trace[-2], trace[-1]
            if abs(prev - cur) <= cfg.eps_stop * max(abs(cur), 1e-300):
                converged = True
                break
    memberships = Membership(gamma.gamma, q=1.0, mode="soft")
    return FitResult(
        memberships=memberships,
        outlier_norms=params.o.norms,
        cost_trace=np.asarray(trace),
        iterations=iterations,
        converged=converged,
        centroids=params.m,
        outliers=params.o,
        pi=params.pi,
        sigma=params.sigma,
        degenerate=degenerate,
    )


def rpc_fit(x: DataSet, c: int, cfg: FitConfig, init=None) -> FitResult:
    """Robust probabilistic clustering by regularized EM.

    ``init`` may be None (seeded: means drawn from the data without
    replacement, uniform weights, deviation from the data spread), a
    `MixtureParams`, or a previous raw-space `FitResult` (warm start).
    Requires ``cfg.lam > 0``; the objective is unbounded below at lam = 0.
    """
    if c < 1:
        raise ValueError("need at least one cluster")
    if cfg.lam <= 0:
        raise ValueError("rpc requires lam > 0")
    params = _resolve_params(x, c, cfg, init)

    def objective(p):
        return rpc_objective(x, p, cfg.lam)

    def linear(o):
        return float(np.sum(penalty_term(cfg.lam, o.norms)))

    return _em_loop(x, cfg, params, lambda o_prev: cfg.lam, linear, objective)


def _resolve_params(x, c, cfg, init):
    if init is None:
        return _init_params(x, c, cfg)
    if isinstance(init, MixtureParams):
        return init
    if isinstance(init, FitResult):
        if init.centroids is None or init.outliers is None or init.pi is None:
            raise ValueError("warm start requires a raw-space probabilistic FitResult")
        return MixtureParams(init.pi, init.centroids, init.sigma, init.outliers)
    raise TypeError(f"unsupported init: {type(init).__name__}")


def wrpc_fit(x: DataSet, c: int, cfg: FitConfig, warm: FitResult) -> FitResult:
    """Reweighted robust probabilistic clustering, warm-started from `rpc_fit`.

    Thresholds become lam_n * sigma with lam_n = lam / (||o_n|| + eps) from
    the previous cycle; sigma is updated as the exact minimizer under the log
    penalty, keeping the traced weighted objective non-increasing.
    """
    if not cfg.reweight:
        raise ValueError("wrpc_fit requires cfg.reweight=True")
    params = _resolve_params(x, c, cfg, warm)
    eps = cfg.reweight_epsilon or default_reweight_epsilon(params.o)

    def objective(p):
        return rpc_weighted_objective(x, p, cfg.lam, eps)

    def linear(o):
        return cfg.lam * float(np.sum(np.log(o.norms + eps)))

    return _em_loop(x, cfg, params, lambda o_prev: reweight(o_prev, cfg.lam, eps), linear, objective)
