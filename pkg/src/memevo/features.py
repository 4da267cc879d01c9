"""Task feature matrices: native coordinates (CVRP) or classical MDS (CARP).

A feature matrix is a plain ``(p, n)`` float array whose column ``i`` holds
the features of task ``i``.
"""
from __future__ import annotations

import numpy as np

from .instance import Kind, RoutingInstance


def mds_embed(distances: np.ndarray, p: int) -> np.ndarray:
    """Classical (Torgerson) multidimensional scaling.

    Parameters
    ----------
    distances : (n, n) array
        Symmetric, nonnegative, zero diagonal.
    p : int
        Target dimension, at most ``n``.

    Returns
    -------
    X : (p, n) array
        Embedded coordinates, one column per point. Components beyond the
        number of positive eigenvalues are zero.
    """
    D = np.asarray(distances, dtype=np.float64)
    n = D.shape[0]
    if D.shape != (n, n):
        raise ValueError("distance matrix must be square")
    if p > n:
        raise ValueError(f"cannot embed {n} points in {p} dimensions")
    if p < 1:
        raise ValueError("p must be positive")
    H = np.eye(n) - np.ones((n, n)) / n
    B = -0.5 * H @ (D ** 2) @ H
    B = (B + B.T) / 2
    evals, evecs = np.linalg.eigh(B)
    order = np.argsort(evals)[::-1][:p]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    # eigenvector signs are arbitrary; fix them so equal input gives equal output
    for k in range(p):
        j = np.argmax(np.abs(evecs[:, k]))
        if evecs[j, k] < 0:
            evecs[:, k] = -evecs[:, k]
    return (evecs * np.sqrt(evals)).T.copy()


def featurize(instance: RoutingInstance, p: int = 2) -> np.ndarray:
    """Feature matrix ``X`` (p x n) of an instance's tasks."""
    if instance.kind is Kind.CVRP:
        if instance.coords is None:
            raise ValueError("CVRP instance has no coordinates")
        X = instance.coords[instance.heads].T.astype(np.float64)
        if p != X.shape[0]:
            raise ValueError(f"CVRP features are planar; requested p={p}")
        return X
    n = instance.n_tasks
    if n < p:
        # too few tasks for p dimensions: embed in n and zero-pad
        X = np.zeros((p, n))
        X[:n] = mds_embed(instance.task_distances, n)
        return X
    return mds_embed(instance.task_distances, p)
