"""Seeded synthetic benchmark generators and point/graph file ingestion.

Two generators mirror the classic benchmark layouts: four spherical Gaussian
clusters contaminated by uniform box outliers, and two concentric noisy rings
with outliers confined to the annular gaps.  Inlier labels are 0..C-1;
generated outliers carry the extra label C and a truth flag.  Identical seeds
reproduce byte-identical datasets.
"""

from __future__ import annotations

import warnings

import numpy as np

from .core import DataSet

__all__ = [
    "DataFormatError",
    "gen_spherical",
    "gen_rings",
    "load_csv",
    "load_edgelist",
    "save_points_csv",
    "save_truth_csv",
    "load_truth_csv",
    "save_centers_csv",
    "load_centers_csv",
    "DEFAULT_SPHERICAL_CENTERS",
]

DEFAULT_SPHERICAL_CENTERS = ((-9.0, -9.0), (-9.0, 9.0), (9.0, -9.0), (9.0, 9.0))


class DataFormatError(ValueError):
    """A data file failed to parse; carries the offending line number."""


def gen_spherical(
    seed: int,
    n_per_cluster: int = 50,
    n_outliers: int = 80,
    cluster_var: float = 0.8,
    centers=DEFAULT_SPHERICAL_CENTERS,
    box_inflation: float = 0.35,
    exclusion_sd: float = 6.0,
) -> DataSet:
    """Gaussian clusters plus uniform outliers over the inflated bounding box.

    Each cluster draws ``n_per_cluster`` points at its center with isotropic
    variance ``cluster_var``.  Outliers are drawn uniformly over the inlier
    bounding box inflated by ``box_inflation`` per side, rejecting draws
    closer than ``exclusion_sd`` standard deviations to any center, to any
    pairwise center midpoint, or to the grand center.  The midpoint/grand
    exclusions keep planted outliers identifiable: a point sitting at an
    equal-posterior blend of centers is reproduced by the mixture with a zero
    outlier vector, so no outlier-aware fit could ever flag it.
    """
    centers = np.asarray(centers, dtype=float)
    if centers.ndim != 2:
        raise ValueError("centers must be a C x p array")
    if len(np.unique(centers, axis=0)) != len(centers):
        raise ValueError("centers must be distinct")
    if n_per_cluster < 1 or cluster_var <= 0:
        raise ValueError("counts and geometry parameters must be positive")
    c, p = centers.shape
    sd = float(np.sqrt(cluster_var))
    rng = np.random.default_rng(seed)

    inliers = np.concatenate(
        [ctr + sd * rng.standard_normal((n_per_cluster, p)) for ctr in centers]
    )
    labels = np.repeat(np.arange(c), n_per_cluster)

    lo = inliers.min(axis=0)
    hi = inliers.max(axis=0)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) * (1.0 + box_inflation)
    avoid = [centers, [centers.mean(axis=0)]]
    avoid.extend(
        [0.5 * (centers[i] + centers[j])] for i in range(c) for j in range(i + 1, c)
    )
    avoid = np.concatenate([np.atleast_2d(a) for a in avoid])
    radius = exclusion_sd * sd
    outliers = np.empty((n_outliers, p))
    accepted = 0
    while accepted < n_outliers:
        draw = mid + rng.uniform(-1.0, 1.0, size=p) * half
        if np.min(np.linalg.norm(avoid - draw, axis=1)) > radius:
            outliers[accepted] = draw
            accepted += 1

    x = np.concatenate([inliers, outliers])
    truth_labels = np.concatenate([labels, np.full(n_outliers, c)])
    truth_outliers = np.concatenate(
        [np.zeros(len(inliers), dtype=bool), np.ones(n_outliers, dtype=bool)]
    )
    return DataSet(x, truth_labels=truth_labels, truth_outliers=truth_outliers)


def gen_rings(
    seed: int,
    n_inner: int = 50,
    n_outer: int = 150,
    n_outliers: int = 60,
    r_inner: float = 2.0,
    r_outer: float = 6.0,
    ring_sd: float = 0.2,
    band_sd: float = 5.0,
    outer_width: float = 2.0,
) -> DataSet:
    """Two concentric noisy rings plus outliers in the annular gaps.

    Ring points sit at radius ``r +- N(0, ring_sd^2)`` with uniform angles.
    Outliers are drawn uniformly (by area) over the union of the inter-ring
    annulus and an annulus just outside the outer ring, both kept
    ``band_sd * ring_sd`` away from the ring bands.
    """
    if not (0 < r_inner < r_outer):
        raise ValueError("need 0 < r_inner < r_outer")
    if min(n_inner, n_outer, n_outliers) < 0 or ring_sd <= 0:
        raise ValueError("counts and geometry parameters must be positive")
    band = band_sd * ring_sd
    gap_lo, gap_hi = r_inner + band, r_outer - band
    out_lo, out_hi = r_outer + band, r_outer + band + outer_width
    if gap_lo >= gap_hi:
        raise ValueError("rings too close for the outlier gap")
    rng = np.random.default_rng(seed)

    def ring(n, r):
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
        rad = r + ring_sd * rng.standard_normal(n)
        return np.column_stack([rad * np.cos(theta), rad * np.sin(theta)])

    inner = ring(n_inner, r_inner)
    outer = ring(n_outer, r_outer)

    # choose each outlier's annulus by area, then draw uniformly within it
    area_gap = gap_hi**2 - gap_lo**2
    area_out = out_hi**2 - out_lo**2
    outliers = np.empty((n_outliers, 2))
    for i in range(n_outliers):
        if rng.uniform() < area_gap / (area_gap + area_out):
            r2 = rng.uniform(gap_lo**2, gap_hi**2)
        else:
            r2 = rng.uniform(out_lo**2, out_hi**2)
        theta = rng.uniform(0.0, 2.0 * np.pi)
        outliers[i] = np.sqrt(r2) * np.array([np.cos(theta), np.sin(theta)])

    x = np.concatenate([inner, outer, outliers])
    truth_labels = np.concatenate(
        [np.zeros(n_inner, dtype=int), np.ones(n_outer, dtype=int), np.full(n_outliers, 2)]
    )
    truth_outliers = np.concatenate(
        [np.zeros(n_inner + n_outer, dtype=bool), np.ones(n_outliers, dtype=bool)]
    )
    return DataSet(x, truth_labels=truth_labels, truth_outliers=truth_outliers)


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def load_csv(path, labels: bool = False) -> DataSet:
    """Load a comma-separated point cloud, one point per row.

    A single header row is detected by a non-numeric first token.  With
    ``labels=True`` the trailing column is read as integer cluster labels.
    Malformed rows raise `DataFormatError` naming the line.
    """
    rows = []
    truth = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            tokens = [t.strip() for t in line.split(",")]
            if lineno == 1 and not _is_number(tokens[0]):
                continue  # header
            try:
                values = [float(t) for t in tokens]
            except ValueError as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
            if labels:
                if len(values) < 2:
                    raise DataFormatError(f"{path}: line {lineno}: missing label column")
                truth.append(int(values[-1]))
                values = values[:-1]
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DataFormatError(
                    f"{path}: line {lineno}: expected {width} columns, got {len(values)}"
                )
            rows.append(values)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return DataSet(np.asarray(rows), truth_labels=np.asarray(truth) if labels else None)


def save_points_csv(dataset: DataSet, path, header: bool = True):
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(",".join(f"x{j}" for j in range(dataset.p)) + "\n")
        for row in dataset.x:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def save_truth_csv(dataset: DataSet, path):
    """Sidecar with one `label,outlier` row per point."""
    if dataset.truth_labels is None or dataset.truth_outliers is None:
        raise ValueError("dataset carries no ground truth")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("label,outlier\n")
        for lab, flag in zip(dataset.truth_labels, dataset.truth_outliers):
            fh.write(f"{int(lab)},{int(flag)}\n")


def load_truth_csv(path):
    """Read a `label,outlier` sidecar; returns (labels, outlier flags)."""
    labels = []
    flags = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            tokens = line.split(",")
            if lineno == 1 and not _is_number(tokens[0]):
                continue
            try:
                labels.append(int(float(tokens[0])))
                flags.append(bool(int(float(tokens[1]))))
            except (ValueError, IndexError) as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
    return np.asarray(labels), np.asarray(flags)


def save_centers_csv(centers, path):
    m = np.asarray(getattr(centers, "m", centers), dtype=float)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(f"x{j}" for j in range(m.shape[0])) + "\n")
        for col in m.T:
            fh.write(",".join(repr(float(v)) for v in col) + "\n")


def load_centers_csv(path) -> np.ndarray:
    """Read centers (one per row) back as a p x C matrix."""
    ds = load_csv(path)
    return ds.x.T


def load_edgelist(path):
    """Read an undirected whitespace-separated edge list.

    Node ids may be integers or arbitrary strings; they map to dense indices
    in first-seen order.  Comment lines start with '#'.  Self-loops are
    stripped; duplicate edges collapse with a warning.  Returns
    ``(adjacency, names)`` with a symmetric 0/1 matrix.
    """
    edges = []
    names = []
    index = {}

    def node_id(token):
        if token not in index:
            index[token] = len(names)
            names.append(token)
        return index[token]

    duplicates = 0
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) != 2:
                raise DataFormatError(
                    f"{path}: line {lineno}: expected two node ids, got {len(tokens)}"
                )
            a, b = node_id(tokens[0]), node_id(tokens[1])
            if a == b:
                continue  # self-loop
            key = (min(a, b), max(a, b))
            if key in seen:
                duplicates += 1
                continue
            seen.add(key)
            edges.append(key)
    if not names:
        raise DataFormatError(f"{path}: no edges")
    if duplicates:
        warnings.warn(f"{path}: collapsed {duplicates} duplicate edge(s)")
    n = len(names)
    adj = np.zeros((n, n))
    for a, b in edges:
        adj[a, b] = 1.0
        adj[b, a] = 1.0
    return adj, names
