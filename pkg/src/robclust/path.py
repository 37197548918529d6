"""Lambda-grid construction and warm-started regularization-path fitting.

A path runs one of the clustering algorithms over a decreasing grid of the
outlier weight, initializing each fit from the previous solution, and selects
the grid point whose flagged-outlier count lands closest to a requested
contamination level.  At (or above) the largest useful weight no point is
flagged; as the weight decreases, points activate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernel as kernel_mod
from . import rkm as rkm_mod
from . import rpc as rpc_mod
from .core import DataSet, FitConfig, FitResult, Membership
from .kernel import KernelMatrix

__all__ = ["ALGORITHMS", "LambdaGrid", "PathEntry", "PathResult", "lambda_max", "make_grid", "path_fit"]

ALGORITHMS = ("rkm", "wrkm", "rpc", "wrpc", "krkm", "krpc")
_BASE = {"wrkm": "rkm", "wrpc": "rpc"}


@dataclass(frozen=True)
class LambdaGrid:
    """Strictly decreasing positive weights, largest first."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).copy()
        if v.ndim != 1 or v.size < 1 or v.size > 1000:
            raise ValueError("grid must be a 1-D sequence of at most 1000 values")
        if np.any(v <= 0) or np.any(np.diff(v) >= 0):
            raise ValueError("grid values must be positive and strictly decreasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class PathEntry:
    """One grid point: the weight, its flagged set, and the full fit."""

    lam: float
    n_flagged: int
    flagged: np.ndarray
    result: FitResult


@dataclass(frozen=True)
class PathResult:
    """Per-grid-point summaries plus the index selected for the target count."""

    algorithm: str
    target: int
    entries: tuple
    selected: int
    reached: bool

    @property
    def selected_entry(self) -> PathEntry:
        return self.entries[self.selected]

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([e.lam for e in self.entries])

    @property
    def counts(self) -> np.ndarray:
        return np.array([e.n_flagged for e in self.entries])


def _first_cycle_residual_norms(data, c, cfg, algorithm, init):
    """Residual norms right before the first outlier update, per algorithm."""
    if algorithm in ("rkm", "wrkm"):
        x = data
        if isinstance(init, Membership):
            u = init
        elif isinstance(init, FitResult):
            u = init.memberships
        else:
            u = rkm_mod.random_membership(np.random.default_rng(cfg.seed), x.n, c, cfg.q)
        o = rkm_mod.OutlierState.zeros(x.p, x.n)
        m = rkm_mod.update_centroids(x, u, o)
        r = rkm_mod.compute_residuals(x, m, u)
        return np.linalg.norm(r, axis=0), None
    if algorithm in ("rpc", "wrpc"):
        x = data
        params = rpc_mod._resolve_params(x, c, cfg, init)
        gamma = rpc_mod.e_step(x, params)
        m = rpc_mod.update_means_em(x, gamma, params.o)
        r = rpc_mod.em_residuals(x, m, gamma)
        return np.linalg.norm(r, axis=0), params.sigma
    kmat = data.k
    n = data.n
    if algorithm == "krkm":
        if isinstance(init, Membership):
            u = init
        elif isinstance(init, FitResult):
            u = init.memberships
        else:
            u = rkm_mod.random_membership(np.random.default_rng(cfg.seed), n, c, cfg.q)
        uq = u.uq
        b = uq / uq.sum(axis=0)
        kb = kmat @ b
        scaled = (uq / uq.sum(axis=1)[:, None]).T
        delta = np.eye(n) - b @ scaled
        kdelta = kmat - kb @ scaled
        norms = np.sqrt(np.maximum(np.einsum("in,in->n", delta, kdelta), 0.0))
        return norms, None
    if algorithm == "krpc":
        if isinstance(init, Membership):
            counts = init.u.sum(axis=0)
            b = init.u / np.maximum(counts, 1.0)[None, :]
            pi = counts / n
        else:
            rng = np.random.default_rng(cfg.seed)
            picks = rng.choice(n, size=c, replace=False)
            b = np.zeros((n, c))
            b[picks, np.arange(c)] = 1.0
            pi = np.full(c, 1.0 / c)
        sigma = math.sqrt(max(kernel_mod._kernel_data_scale_sq(kmat), 1e-300))
        sq = kernel_mod._kernel_sq_dists(kmat, np.zeros((n, n)), kmat @ b, np.zeros((n, n)), b)
        from .core import gaussian_logpdf_spherical

        logw = np.log(pi)[None, :] + gaussian_logpdf_spherical(sq, sigma, n)
        logw -= logw.max(axis=1, keepdims=True)
        gamma = np.exp(logw)
        gamma /= gamma.sum(axis=1, keepdims=True)
        pi = gamma.mean(axis=0)
        b = gamma / np.maximum(n * pi, 1e-300)[None, :]
        delta = np.eye(n) - b @ gamma.T
        kdelta = kmat - (kmat @ b) @ gamma.T
        norms = np.sqrt(np.maximum(np.einsum("in,in->n", delta, kdelta), 0.0))
        return norms, sigma
    raise ValueError(f"unknown algorithm {algorithm!r}")


def lambda_max(data, c: int, cfg: FitConfig, algorithm: str = "rkm", init=None) -> float:
    """Smallest weight at which the first full cycle from ``init`` flags nothing.

    For the K-means family the first-cycle threshold is lam/2 against the
    residual norms; for the probabilistic family it is lam * sigma.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    norms, sigma = _first_cycle_residual_norms(data, c, cfg, algorithm, init)
    peak = float(np.max(norms))
    if algorithm in ("rpc", "wrpc", "krpc"):
        return peak / sigma
    return 2.0 * peak


def make_grid(lam_max: float, g: int = 100, spacing: str = "log") -> LambdaGrid:
    """Decreasing grid from ``lam_max`` down to ``lam_max * 1e-3``."""
    if lam_max <= 0:
        raise ValueError("lam_max must be > 0 (all first-cycle residuals vanished?)")
    if g < 2:
        raise ValueError("grid needs at least 2 values")
    lo = lam_max * 1e-3
    if spacing == "log":
        values = np.geomspace(lam_max, lo, g)
    elif spacing == "linear":
        values = np.linspace(lam_max, lo, g)
    else:
        raise ValueError("spacing must be 'log' or 'linear'")
    return LambdaGrid(values)


def _fit_once(algorithm, data, c, cfg, init, base_warm):
    if algorithm == "rkm":
        return rkm_mod.rkm_fit(data, c, cfg, init)
    if algorithm == "rpc":
        return rpc_mod.rpc_fit(data, c, cfg, init)
    if algorithm == "krkm":
        return kernel_mod.krkm_fit(data, c, cfg, init)
    if algorithm == "krpc":
        return kernel_mod.krpc_fit(data, c, cfg, init)
    if algorithm == "wrkm":
        return rkm_mod.wrkm_fit(data, c, cfg, base_warm)
    if algorithm == "wrpc":
        return rpc_mod.wrpc_fit(data, c, cfg, base_warm)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def path_fit(
    algorithm: str,
    data,
    c: int,
    target_s: int,
    cfg: FitConfig,
    grid: LambdaGrid | None = None,
    grid_size: int = 100,
    spacing: str = "log",
    restarts: int = 1,
    stop: str = "at_target",
    init=None,
) -> PathResult:
    """Warm-started fits over a decreasing weight grid, targeting ``target_s``
    flagged outliers.

    The first grid point is fit from ``restarts`` seeded initializations
    (minimum final cost wins); each later point starts from the previous
    solution.  ``stop`` is ``"at_target"`` (halt at the first count >= target,
    the default), ``"past_target"`` (halt once the count strictly exceeds the
    target, exposing the full plateau), or ``"never"``.  The selected index
    minimizes |count - target|, ties resolved toward the larger weight; if the
    target is never reached the last grid point is selected and ``reached`` is
    False.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if isinstance(data, DataSet):
        n = data.n
    elif isinstance(data, KernelMatrix):
        n = data.n
    else:
        raise TypeError("data must be a DataSet or KernelMatrix")
    if not (0 <= target_s <= n):
        raise ValueError("target_s must lie in [0, N]")
    if stop not in ("at_target", "past_target", "never"):
        raise ValueError("stop must be 'at_target', 'past_target', or 'never'")
    base_algo = _BASE.get(algorithm, algorithm)
    auto_grid = grid is None
    if auto_grid:
        grid = make_grid(lambda_max(data, c, cfg, base_algo, init), grid_size, spacing)

    entries = []
    base_warm = None
    if auto_grid:
        # the first-cycle bound can undershoot the converged state's activation
        # levels (kernel fits especially); rebuild the grid from the converged
        # solution until the path starts flag-free
        first = _fit_once(base_algo, data, c, cfg.with_lam(float(grid.values[0])), init, None)
        for _ in range(3):
            if first.n_flagged == 0:
                break
            lm = lambda_max(data, c, cfg, base_algo, init=first)
            if lm <= grid.values[0]:
                break
            grid = make_grid(lm, grid_size, spacing)
            first = _fit_once(base_algo, data, c, cfg.with_lam(float(grid.values[0])), first, None)
    for lam in grid.values:
        cfg_g = cfg.with_lam(float(lam))
        if base_warm is None and restarts > 1:
            candidates = []
            for ri in range(restarts):
                cfg_r = replace(cfg_g, seed=cfg_g.seed + ri)
                candidates.append(_fit_once(base_algo, data, c, cfg_r, init, None))
            base_res = min(candidates, key=lambda r: (r.final_cost, r.iterations))
        else:
            base_res = _fit_once(
                base_algo, data, c, cfg_g, base_warm if base_warm is not None else init, None
            )
        if algorithm in _BASE:
            res = _fit_once(algorithm, data, c, cfg_g, None, base_res)
        else:
            res = base_res
        entries.append(PathEntry(float(lam), res.n_flagged, res.flagged, res))
        base_warm = base_res
        count = res.n_flagged
        if stop == "at_target" and count >= target_s:
            break
        if stop == "past_target" and count > target_s:
            break

    counts = [e.n_flagged for e in entries]
    if any(cnt >= target_s for cnt in counts):
        best = 0
        for i, cnt in enumerate(counts):
            if abs(cnt - target_s) < abs(counts[best] - target_s):
                best = i
        selected, reached = best, True
    else:
        selected, reached = len(entries) - 1, False
    return PathResult(
        algorithm=algorithm,
        target=target_s,
        entries=tuple(entries),
        selected=selected,
        reached=reached,
    )
