"""Affinity construction and normalized spectral clustering.

The affinity is ``|C| + |C|'``.  Clustering follows the standard normalized
recipe: symmetric normalized Laplacian with epsilon-regularized degrees,
the K bottom eigenvectors, unit row normalization, then k-means with
farthest-point seeding and multiple restarts.
"""

import logging

import numpy as np
from scipy.linalg import eigh

log = logging.getLogger("sssa")

__all__ = ["build_affinity", "cluster"]

DEGREE_EPS = 1e-12
KMEANS_RESTARTS = 20
KMEANS_MAX_ITER = 300
KMEANS_REL_TOL = 1e-9


def build_affinity(C):
    """Symmetric nonnegative affinity ``|C| + |C|'`` (zero diagonal)."""
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("C must be square")
    if np.any(np.diagonal(C) != 0.0):
        raise ValueError("C must have a zero diagonal")
    A = np.abs(C)
    return A + A.T


def _kmeans_single(E, K, first_center):
    """One Lloyd run from a farthest-point initialization.

    Ties (equidistant points, equal-inertia moves) resolve to the lowest
    index.  Empty clusters are reseeded with the point farthest from its
    assigned center.
    """
    n = E.shape[0]
    centers = np.empty((K, E.shape[1]))
    centers[0] = E[first_center]
    d2 = np.square(E - centers[0]).sum(axis=1)
    for k in range(1, K):
        centers[k] = E[int(np.argmax(d2))]
        d2 = np.minimum(d2, np.square(E - centers[k]).sum(axis=1))

    labels = np.zeros(n, dtype=int)
    inertia = np.inf
    for _ in range(KMEANS_MAX_ITER):
        dist = (
            np.square(E).sum(axis=1)[:, None]
            - 2.0 * E @ centers.T
            + np.square(centers).sum(axis=1)[None, :]
        )
        labels = np.argmin(dist, axis=1)
        point_d2 = dist[np.arange(n), labels]
        for k in range(K):
            sel = labels == k
            if sel.any():
                centers[k] = E[sel].mean(axis=0)
            else:
                far = int(np.argmax(point_d2))
                centers[k] = E[far]
                labels[far] = k
                point_d2[far] = 0.0
        new_inertia = float(
            np.square(E - centers[labels]).sum()
        )
        if abs(inertia - new_inertia) <= KMEANS_REL_TOL * max(inertia, 1e-300):
            inertia = new_inertia
            break
        inertia = new_inertia
    return labels, inertia


def cluster(W, K, seed=0):
    """Segment N points into K clusters from affinity ``W``.

    Deterministic for a fixed seed: the k-means restart with the lowest
    inertia wins, ties broken by restart order.  Raises for K out of range;
    empty output clusters and isolated (zero-degree) points are only
    flagged in the log, since their assignment is arbitrary.
    """
    W = np.asarray(W, dtype=np.float64)
    n = W.shape[0]
    if W.ndim != 2 or W.shape[1] != n:
        raise ValueError("W must be square")
    if not np.array_equal(W, W.T):
        raise ValueError("W must be symmetric")
    if W.min() < 0:
        raise ValueError("W must be nonnegative")
    if np.any(np.diagonal(W) != 0.0):
        raise ValueError("W must have a zero diagonal")
    if K <= 0:
        raise ValueError("K must be positive")
    if K > n:
        raise ValueError(f"K={K} exceeds the number of points {n}")

    deg = W.sum(axis=1)
    isolated = np.flatnonzero(deg == 0)
    if isolated.size:
        log.warning(
            "%d isolated point(s) in affinity: %s (assignment arbitrary)",
            isolated.size, isolated.tolist(),
        )
    dinv = 1.0 / np.sqrt(deg + DEGREE_EPS)
    L = np.eye(n) - dinv[:, None] * W * dinv[None, :]
    _, vecs = eigh(L, subset_by_index=[0, K - 1])
    norms = np.linalg.norm(vecs, axis=1)
    E = vecs / np.maximum(norms, 1e-300)[:, None]

    rng = np.random.default_rng(seed)
    first_centers = rng.integers(0, n, size=KMEANS_RESTARTS)
    best_labels, best_inertia = None, np.inf
    for r in range(KMEANS_RESTARTS):
        labels, inertia = _kmeans_single(E, K, int(first_centers[r]))
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia

    counts = np.bincount(best_labels, minlength=K)
    if (counts == 0).any():
        log.warning(
            "clustering produced %d empty cluster(s)", int((counts == 0).sum())
        )
    return best_labels
