"""Cluster assignment methods for encoder outputs.

Three methods: cosine-similarity graph components, seeded k-means, and a
deterministic PCA reduction followed by k-means. All methods depend only
on the point multiset (plus the seed), so permuting input rows permutes
labels consistently; ids are contiguous from 0 in order of first
appearance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


@dataclass
class ClusterAssignment:
    labels: np.ndarray               # cluster id per input row
    method: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)

    @property
    def num_clusters(self) -> int:
        return int(np.unique(self.labels).size)


class UnionFind:
    """Union by rank with path compression over 0..n-1."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1


def _relabel_first_appearance(raw: np.ndarray) -> np.ndarray:
    """Contiguous ids from 0 in order of first appearance along the rows."""
    mapping: dict[int, int] = {}
    out = np.empty(raw.size, dtype=np.int64)
    for i, r in enumerate(raw):
        key = int(r)
        if key not in mapping:
            mapping[key] = len(mapping)
        out[i] = mapping[key]
    return out


def _normalize_rows(z: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(z, axis=1)
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise InputError(f"zero-norm embedding at row {bad[0]}")
    return z / norms[:, None]


def cosine_threshold_clusters(z: np.ndarray, th: float) -> ClusterAssignment:
    """Connected components of the graph with an edge where cosine
    similarity exceeds th. Component ids follow each component's smallest
    member index."""
    z = np.asarray(z, dtype=np.float64)
    if not -1.0 < th < 1.0:
        raise InputError(f"threshold must lie in (-1, 1), got {th}")
    zn = _normalize_rows(z)
    sims = np.clip(zn @ zn.T, -1.0, 1.0)
    n = z.shape[0]
    uf = UnionFind(n)
    ii, jj = np.nonzero(np.triu(sims > th, k=1))
    for a, b in zip(ii.tolist(), jj.tolist()):
        uf.union(a, b)
    roots = np.array([uf.find(i) for i in range(n)])
    labels = _relabel_first_appearance(roots)
    return ClusterAssignment(labels=labels, method="cosine-threshold", params={"th": th})


def _kmeans_once(points: np.ndarray, k: int, rng: np.random.Generator,
                 max_iters: int) -> tuple[np.ndarray, np.ndarray, float, list[float]]:
    """One k-means++ init plus Lloyd iterations on a fixed point order.

    Returns (labels, centroids, inertia, inertia history). Empty clusters
    are reseeded to the point farthest from its assigned centroid.
    """
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[c] = points[rng.integers(n)]
        else:
            centroids[c] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((points - centroids[c]) ** 2).sum(axis=1))

    history: list[float] = []
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iters):
        dists = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = dists.argmin(axis=1)
        point_d2 = dists[np.arange(n), labels]
        for c in range(k):
            if not np.any(labels == c):
                far = int(point_d2.argmax())
                centroids[c] = points[far]
                labels[far] = c
                dists[:, c] = ((points - centroids[c]) ** 2).sum(axis=1)
                point_d2 = dists[np.arange(n), labels]
        history.append(float(point_d2.sum()))
        new_centroids = centroids.copy()
        for c in range(k):
            members = labels == c
            if np.any(members):
                new_centroids[c] = points[members].mean(axis=0)
        shift = np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()
        centroids = new_centroids
        if shift < 1e-8:
            break
    dists = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = dists.argmin(axis=1)
    inertia = float(dists[np.arange(n), labels].sum())
    history.append(inertia)
    return labels, centroids, inertia, history


def kmeans(z: np.ndarray, k: int, seed: int = 0, max_iters: int = 100,
           restarts: int = 8) -> ClusterAssignment:
    """Seeded k-means++ with Lloyd iterations, best inertia over restarts.

    Points are canonicalized (lexicographic sort) before sampling, so the
    result is invariant to input row order.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise InputError(f"points must be a non-empty (n, d) matrix, got {z.shape}")
    n = z.shape[0]
    if k < 1:
        raise InputError(f"k must be at least 1, got {k}")
    if k > n:
        raise InputError(f"k = {k} exceeds point count {n}")

    order = np.lexsort(z.T[::-1])
    canon = z[order]
    best = None
    for r in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 31, r]))
        _, centroids, inertia, history = _kmeans_once(canon, k, rng, max_iters)
        if best is None or inertia < best[1]:
            best = (centroids, inertia, history, r)
    centroids, inertia, history, restart = best

    dists = ((z[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = _relabel_first_appearance(dists.argmin(axis=1))
    return ClusterAssignment(labels=labels, method="kmeans",
                             params={"k": k, "seed": seed, "restarts": restarts,
                                     "inertia": inertia, "inertia_history": history,
                                     "chosen_restart": restart})


def pca_project(z: np.ndarray, target_dims: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center and project onto the top principal components.

    Eigendecomposition of the covariance with a deterministic sign
    convention (largest-magnitude loading positive). Returns
    (coords, components, explained_variance).
    """
    z = np.asarray(z, dtype=np.float64)
    n, d = z.shape
    if target_dims > d:
        raise InputError(f"target_dims {target_dims} exceeds dimensionality {d}")
    if n <= target_dims:
        raise InputError(f"need more than {target_dims} points, got {n}")
    centered = z - z.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    tol = max(eigvals[0], 0.0) * 1e-12
    rank = int((eigvals > tol).sum())
    if rank < target_dims:
        raise InputError(f"covariance rank {rank} is below target_dims {target_dims}")
    comps = eigvecs[:, :target_dims]
    for j in range(target_dims):
        pivot = int(np.abs(comps[:, j]).argmax())
        if comps[pivot, j] < 0:
            comps[:, j] = -comps[:, j]
    return centered @ comps, comps, eigvals[:target_dims]


def reduce_then_kmeans(z: np.ndarray, target_dims: int, k: int, seed: int = 0,
                       max_iters: int = 100, restarts: int = 8
                       ) -> tuple[ClusterAssignment, np.ndarray]:
    """PCA to target_dims then k-means; also returns the low-dimensional
    coordinates for plotting."""
    coords, _, eigvals = pca_project(z, target_dims)
    assignment = kmeans(coords, k, seed=seed, max_iters=max_iters, restarts=restarts)
    assignment = ClusterAssignment(labels=assignment.labels, method="reduce-kmeans",
                                   params={**assignment.params, "target_dims": target_dims,
                                           "explained_variance": eigvals.tolist()})
    return assignment, coords
