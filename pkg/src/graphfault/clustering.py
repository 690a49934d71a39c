"""Mini-batch k-means with k-means++ seeding."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatch, TooManyClusters

TOL = 1e-6


@dataclass
class ClusterModel:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]


def default_n_clusters(n_rows: int, n_max: int) -> int:
    return max(2, math.ceil(n_rows / (2 * n_max)))


def _rows(matrix):
    x = matrix.rows if hasattr(matrix, "rows") else matrix
    return np.atleast_2d(np.asarray(x, dtype=np.float64))


def _sq_dists(x, centroids):
    # explicit differences keep exact zeros and exact ties
    chunk = max(1, (1 << 21) // max(1, centroids.size))
    out = np.empty((x.shape[0], centroids.shape[0]))
    for s in range(0, x.shape[0], chunk):
        diff = x[s : s + chunk, None, :] - centroids[None, :, :]
        out[s : s + chunk] = (diff * diff).sum(axis=2)
    return out


def _nearest(x, centroids):
    d = _sq_dists(x, centroids)
    idx = d.argmin(axis=1)  # first minimum, so ties go to the lower id
    return idx, d[np.arange(x.shape[0]), idx]


def _kmeans_pp(x, k, rng):
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    closest = ((x - x[chosen[0]]) ** 2).sum(1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=closest / total))
        else:
            # all remaining points coincide with a centre
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(free))
        chosen.append(nxt)
        closest = np.minimum(closest, ((x - x[nxt]) ** 2).sum(1))
    return x[chosen].copy()


def _repair_empty(x, centroids, assign, dist):
    """Move empty centroids onto the point farthest from its own centroid."""
    for _ in range(centroids.shape[0]):
        counts = np.bincount(assign, minlength=centroids.shape[0])
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0 or dist.max() <= 0:
            break
        far = int(dist.argmax())
        centroids[empty[0]] = x[far]
        assign, dist = _nearest(x, centroids)
    return assign, dist


def minibatch_kmeans(matrix, n_clusters: int, batch_size: int = 256, max_iters: int = 100,
                     seed: int = 0) -> ClusterModel:
    """Sculley-style mini-batch k-means.

    Each iteration samples ``batch_size`` rows without replacement and moves
    every assigned centroid toward its points with per-centroid learning rate
    ``1 / count``. Stops after ``max_iters`` or once no centroid moves more
    than 1e-6. Final assignments are computed over the full matrix.
    """
    x = _rows(matrix)
    n = x.shape[0]
    if n_clusters > n:
        raise TooManyClusters(f"{n_clusters} clusters requested for {n} rows")
    if n_clusters < 1 or batch_size < 1:
        raise ConfigError("n_clusters and batch_size must be >= 1")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(x, n_clusters, rng)
    counts = np.zeros(n_clusters)
    b = min(batch_size, n)
    for _ in range(max_iters):
        batch = rng.choice(n, size=b, replace=False)
        nearest, _ = _nearest(x[batch], centroids)
        before = centroids.copy()
        for i, c in zip(batch, nearest):
            counts[c] += 1
            eta = 1.0 / counts[c]
            centroids[c] = (1.0 - eta) * centroids[c] + eta * x[i]
        if np.sqrt(((centroids - before) ** 2).sum(1)).max() < TOL:
            break
    assign, dist = _nearest(x, centroids)
    assign, dist = _repair_empty(x, centroids, assign, dist)
    return ClusterModel(centroids, assign, float(dist.sum()))


def assign_clusters(model: ClusterModel, matrix) -> np.ndarray:
    x = _rows(matrix)
    if x.shape[1] != model.centroids.shape[1]:
        raise DimensionMismatch(f"matrix has {x.shape[1]} columns, centroids {model.centroids.shape[1]}")
    return _nearest(x, model.centroids)[0]


def inertia(matrix, centroids) -> float:
    return float(_nearest(_rows(matrix), centroids)[1].sum())
