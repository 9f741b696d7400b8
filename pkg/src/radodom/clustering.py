"""DBSCAN by region growing over KD-tree range queries."""

from __future__ import annotations

import itertools

import numpy as np
from scipy.spatial import cKDTree

NOISE = -1


def dbscan(points, eps: float, min_pts: int) -> np.ndarray:
    """Cluster ``points`` (N, D) and return one label per point.

    A core point has at least ``min_pts`` neighbors within ``eps`` (inclusive,
    the point itself included). Seeds are visited in index order, so clusters
    are numbered by their lowest-index core point and a border point reachable
    from several clusters joins the first one discovered. Noise is ``-1``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    labels = np.full(n, NOISE, dtype=int)
    if n == 0:
        return labels
    is_core = cKDTree(pts).query_ball_point(pts, r=eps, return_length=True) >= min_pts

    # Labels only depend on the order clusters are seeded in, not on the visit
    # order inside one expansion, so each cluster grows layer by layer against
    # a tree of the still-unlabeled points; dense blobs then cost O(n log n)
    # instead of the O(n^2) of materialized neighbor lists.
    cluster = 0
    for seed in range(n):
        if labels[seed] != NOISE or not is_core[seed]:
            continue
        labels[seed] = cluster
        frontier = np.array([seed])
        while len(frontier):
            free = np.flatnonzero(labels == NOISE)
            if len(free) == 0:
                break
            hits = cKDTree(pts[free]).query_ball_point(pts[frontier], r=eps)
            fresh = free[np.unique(np.fromiter(itertools.chain.from_iterable(hits), dtype=np.intp))]
            labels[fresh] = cluster
            frontier = fresh[is_core[fresh]]
        cluster += 1
    return labels


def cluster_sizes(labels) -> dict[int, int]:
    ids, counts = np.unique(labels[labels != NOISE], return_counts=True)
    return {int(i): int(c) for i, c in zip(ids, counts)}
