"""Dense symmetric eigensolver used for kernel validation, graph-kernel shift
selection, and spectral initialization.

Jacobi iteration with a round-robin (tournament) ordering: each round rotates
a batch of disjoint index pairs, so the whole batch vectorizes over numpy
slabs.  Adequate for the desk scales this package targets (N up to a couple
thousand) with no dependency beyond numpy.  Eigenvalues come back ascending.
"""

from __future__ import annotations

import numpy as np

__all__ = ["symmetric_eigh", "min_eigenvalue"]


def _round_robin_rounds(n: int):
    """Partition all index pairs of {0..n-1} into rounds of disjoint pairs."""
    players = list(range(n)) + ([n] if n % 2 else [])  # pad odd n with a bye
    m = len(players)
    rounds = []
    others = players[1:]
    for _ in range(m - 1):
        lineup = [players[0]] + others
        pairs = []
        for i in range(m // 2):
            a, b = lineup[i], lineup[m - 1 - i]
            if a < n and b < n:
                pairs.append((min(a, b), max(a, b)))
        rounds.append(
            (np.array([p for p, _ in pairs]), np.array([q for _, q in pairs]))
        )
        others = others[-1:] + others[:-1]
    return rounds


def _offdiag_norm(a: np.ndarray) -> float:
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.linalg.norm(off))


def symmetric_eigh(a, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigendecomposition of a real symmetric matrix by parallel Jacobi sweeps.

    Returns ``(w, v)`` with eigenvalues ``w`` ascending and the matching
    eigenvectors as columns of ``v``.  Raises if the off-diagonal mass fails
    to fall below ``tol`` times the matrix norm within ``max_sweeps``.
    """
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    n = a.shape[0]
    if not np.allclose(a, a.T, atol=1e-8 * max(1.0, np.abs(a).max(initial=1.0))):
        raise ValueError("matrix must be symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    if n == 1:
        return a[0, :1].copy(), v

    norm = float(np.linalg.norm(a))
    if norm == 0.0:
        return np.zeros(n), v
    rounds = _round_robin_rounds(n)

    converged = False
    for _ in range(max_sweeps):
        if _offdiag_norm(a) <= tol * norm:
            converged = True
            break
        for ps, qs in rounds:
            apq = a[ps, qs]
            app = a[ps, ps]
            aqq = a[qs, qs]
            active = apq != 0.0
            theta = np.zeros_like(apq)
            np.divide(aqq - app, 2.0 * apq, out=theta, where=active)
            t = np.where(
                active,
                np.copysign(1.0, theta) / (np.abs(theta) + np.hypot(theta, 1.0)),
                0.0,
            )
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # right rotation (columns), then left rotation (rows)
            pc = a[:, ps].copy()
            qc = a[:, qs].copy()
            a[:, ps] = pc * c - qc * s
            a[:, qs] = pc * s + qc * c
            pr = a[ps, :].copy()
            qr = a[qs, :].copy()
            a[ps, :] = c[:, None] * pr - s[:, None] * qr
            a[qs, :] = s[:, None] * pr + c[:, None] * qr
            # same-pair entries analytically, for accuracy
            a[ps, ps] = app - t * apq
            a[qs, qs] = aqq + t * apq
            a[ps, qs] = 0.0
            a[qs, ps] = 0.0
            pv = v[:, ps].copy()
            qv = v[:, qs].copy()
            v[:, ps] = pv * c - qv * s
            v[:, qs] = pv * s + qv * c
    else:
        converged = _offdiag_norm(a) <= tol * norm
    if not converged:
        raise RuntimeError("Jacobi eigensolver failed to converge")

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def min_eigenvalue(a, tol: float = 1e-12) -> float:
    """Smallest eigenvalue of a real symmetric matrix.

    Bisection on the Cholesky inertia test (A - mu*I is positive definite iff
    the factorization succeeds), bracketed by Gershgorin bounds.  Much cheaper
    than a full decomposition when only the extreme eigenvalue is needed.
    """
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    if n == 1:
        return float(a[0, 0])
    diag = np.diag(a)
    radii = np.sum(np.abs(a), axis=1) - np.abs(diag)
    lo = float(np.min(diag - radii))
    hi = float(np.min(diag))  # lambda_min never exceeds the smallest diagonal
    scale = max(abs(lo), abs(hi), 1e-300)
    eye = np.eye(n)

    def is_pd(mu: float) -> bool:
        try:
            np.linalg.cholesky(a - mu * eye)
            return True
        except np.linalg.LinAlgError:
            return False

    if not is_pd(lo):
        lo -= scale  # guard against ties at the Gershgorin bound
        if not is_pd(lo):
            raise RuntimeError("failed to bracket the smallest eigenvalue")
    while hi - lo > tol * scale:
        mid = 0.5 * (lo + hi)
        if is_pd(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
