"""RNN-DBSCAN clustering of obstacle samples and their conversion to convex hulls."""

from __future__ import annotations

from collections import deque

import numpy as np
from scipy.spatial import ConvexHull, HalfspaceIntersection, cKDTree

from .geometry import Polytope

NOISE = -1


def knn_graph(points, k):
    """Indices and distances of the ``k`` nearest neighbours of every point (self excluded)."""
    tree = cKDTree(points)
    dist, idx = tree.query(points, k=k + 1)
    n = len(points)
    rows = np.arange(n)
    nbr = np.empty((n, k), dtype=np.int64)
    nd = np.empty((n, k))
    for i in range(n):
        keep = idx[i] != rows[i]
        ii, dd = idx[i][keep][:k], dist[i][keep][:k]
        nbr[i], nd[i] = ii, dd
    return nbr, nd


def rnn_dbscan(points, k=10):
    """Cluster ``points`` with RNN-DBSCAN.

    A point is core when at least ``k`` points list it among their ``k``
    nearest neighbours. Clusters grow from core points through their k-NN and
    their core reverse neighbours; leftover noise is attached to the nearest
    core neighbour's cluster when within that cluster's density radius.

    Returns
    -------
    labels : ndarray of int
        Cluster id per point, ``-1`` for noise.
    clusters : list of ndarray
        Point indices of each cluster, ordered by cluster id.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k + 1:
        raise ValueError(f"need at least k+1 = {k + 1} points, got {n}")
    nbr, nd = knn_graph(points, k)
    rev_count = np.bincount(nbr.ravel(), minlength=n)
    core = rev_count >= k
    # reverse neighbour lists
    order = np.argsort(nbr.ravel(), kind="stable")
    src = np.repeat(np.arange(n), k)[order]
    starts = np.searchsorted(nbr.ravel()[order], np.arange(n + 1))
    rev = [src[starts[i] : starts[i + 1]] for i in range(n)]

    def neighbourhood(x):
        r = rev[x]
        return np.concatenate([nbr[x], r[core[r]]])

    unclassified = -2
    labels = np.full(n, unclassified, dtype=np.int64)
    cid = 0
    for x in range(n):
        if labels[x] != unclassified:
            continue
        if not core[x]:
            labels[x] = NOISE
            continue
        labels[x] = cid
        queue = deque()
        for z in neighbourhood(x):
            if labels[z] == unclassified:
                queue.append(z)
            if labels[z] in (unclassified, NOISE):
                labels[z] = cid
        while queue:
            y = queue.popleft()
            if not core[y]:
                continue
            for z in neighbourhood(y):
                if labels[z] == unclassified:
                    labels[z] = cid
                    queue.append(z)
                elif labels[z] == NOISE:
                    labels[z] = cid
        cid += 1

    # density radius of each cluster: max k-NN distance between its core points
    den = np.zeros(cid)
    for x in np.flatnonzero(core):
        c = labels[x]
        if c < 0:
            continue
        same = core[nbr[x]] & (labels[nbr[x]] == c)
        if same.any():
            den[c] = max(den[c], nd[x][same].max())
    for x in np.flatnonzero(labels == NOISE):
        best, best_d = NOISE, np.inf
        for z, dz in zip(nbr[x], nd[x]):
            c = labels[z]
            if core[z] and c >= 0 and dz <= den[c] and dz < best_d:
                best, best_d = c, dz
        labels[x] = best
    clusters = [np.flatnonzero(labels == c) for c in range(cid)]
    return labels, clusters


def _affine_rank(points, tol=1e-9):
    if len(points) < 2:
        return 0
    centred = points - points.mean(axis=0)
    s = np.linalg.svd(centred, compute_uv=False)
    scale = max(s[0], 1.0)
    return int(np.sum(s > tol * scale))


def cluster_to_polytope(cluster, inflation=0.0, min_thickness=1e-6):
    """Convex hull of ``cluster`` as an H-polytope, pushed out by ``inflation``.

    Clusters of affine dimension below the ambient one are thickened by an
    axis-aligned box of half-width ``max(inflation, min_thickness)`` before the
    hull is taken. The returned polytope keeps its vertices in ``points``.
    """
    pts = np.unique(np.atleast_2d(np.asarray(cluster, dtype=float)), axis=0)
    if len(pts) == 0:
        raise ValueError("empty cluster")
    m = pts.shape[1]
    if _affine_rank(pts) < m:
        w = max(inflation, min_thickness)
        corners = np.array(np.meshgrid(*[[-w, w]] * m, indexing="ij")).reshape(m, -1).T
        pts = (pts[:, None, :] + corners[None, :, :]).reshape(-1, m)
        hull = ConvexHull(pts)
        verts = pts[hull.vertices]
        return _hull_polytope(hull, verts, 0.0)
    hull = ConvexHull(pts)
    return _hull_polytope(hull, pts[hull.vertices], inflation)


def _hull_polytope(hull, verts, inflation):
    m = verts.shape[1]
    A = hull.equations[:, :m]
    b = -hull.equations[:, m]
    # qhull may emit several coplanar facets; merge identical rows
    Ab = np.round(np.hstack([A, b[:, None]]), 12)
    _, first = np.unique(Ab, axis=0, return_index=True)
    first.sort()
    A, b = A[first], b[first]
    if inflation > 0:
        b = b + inflation
        interior = verts.mean(axis=0)
        hs = HalfspaceIntersection(np.hstack([A, -b[:, None]]), interior)
        verts = hs.intersections
    return Polytope(A, b, points=verts)
