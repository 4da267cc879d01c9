"""Reusing memes on a new instance: selection, variation and imitation."""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from filelock import FileLock

from .features import featurize
from .instance import Kind, RoutingInstance
from .meme import Meme, dumps_memes, factorize, hsic_score, loads_memes, project_simplex
from .routing import Solution, from_routes
from .solver import heuristic_population, random_population


class NoMemeAvailable(LookupError):
    """The meme pool is empty; callers fall back to baseline initialization."""


class PoolError(ValueError):
    """The meme pool file exists but cannot be read."""


@dataclass
class TransferParams:
    beta: float = 0.8
    rounds: int = 2
    p: int = 2
    qp_tolerance: float = 1e-8
    qp_max_iterations: int = 100_000

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")


class SocietyOfMemes:
    """Ordered, append-only pool of memes, optionally backed by a JSON file."""

    def __init__(self, memes=(), path=None):
        self.memes: list[Meme] = []
        self.path = Path(path) if path is not None else None
        for m in memes:
            self._add(m)

    def __len__(self):
        return len(self.memes)

    def __iter__(self):
        return iter(self.memes)

    def __getitem__(self, i):
        return self.memes[i]

    @property
    def p(self) -> int | None:
        return self.memes[0].p if self.memes else None

    def _unique_name(self, name: str) -> str:
        taken = {m.source_name for m in self.memes}
        if name not in taken:
            return name
        k = 2
        while f"{name}#{k}" in taken:
            k += 1
        return f"{name}#{k}"

    def _add(self, meme: Meme) -> Meme:
        if self.memes and meme.p != self.p:
            raise ValueError(f"meme dimension {meme.p} does not match pool dimension {self.p}")
        name = self._unique_name(meme.source_name)
        if name != meme.source_name:
            meme = Meme(meme.matrix, name, meme.source_task_mean, meme.source_capacity)
        self.memes.append(meme)
        return meme

    @classmethod
    def load(cls, path) -> SocietyOfMemes:
        """Read a pool file; a missing or empty file gives an empty pool."""
        path = Path(path)
        if not path.exists():
            return cls(path=path)
        text = path.read_text()
        try:
            memes = loads_memes(text)
        except (ValueError, KeyError, TypeError) as exc:
            raise PoolError(f"corrupt meme pool {path}: {exc}") from exc
        try:
            return cls(memes, path=path)
        except ValueError as exc:
            raise PoolError(f"inconsistent meme pool {path}: {exc}") from exc

    def dumps(self) -> str:
        return dumps_memes(self.memes)

    def append(self, meme: Meme) -> Meme:
        """Add a meme; with a backing file, re-read and rewrite it under an exclusive lock."""
        if self.path is None:
            return self._add(meme)
        with FileLock(str(self.path) + ".lock"):
            fresh = SocietyOfMemes.load(self.path)
            stored = fresh._add(meme)
            tmp = self.path.with_name(self.path.name + ".tmp")
            tmp.write_text(fresh.dumps())
            os.replace(tmp, self.path)
        self.memes = fresh.memes
        return stored


def mmd(X_s, X_t: np.ndarray) -> float:
    """Linear-kernel MMD: distance between column means.

    ``X_s`` may be a meme, whose stored source mean is used.
    """
    mu_s = X_s.source_task_mean if isinstance(X_s, Meme) else np.asarray(X_s).mean(axis=1)
    return float(np.linalg.norm(mu_s - np.asarray(X_t).mean(axis=1)))


def similarity_scores(memes, X_new: np.ndarray, capacity_new: float, params: TransferParams | None = None) -> np.ndarray:
    """Sim_i = -(beta * MMD_i + (1 - beta) * Dif_i), both terms max-normalized over the pool."""
    beta = (params or TransferParams()).beta
    memes = list(memes)
    if not memes:
        return np.zeros(0)
    d_mmd = np.array([mmd(m, X_new) for m in memes])
    d_cap = np.array([abs(m.source_capacity - capacity_new) for m in memes])
    d_mmd = d_mmd / d_mmd.max() if d_mmd.max() > 0 else np.zeros_like(d_mmd)
    d_cap = d_cap / d_cap.max() if d_cap.max() > 0 else np.zeros_like(d_cap)
    return -(beta * d_mmd + (1 - beta) * d_cap)


def similarity(meme: Meme, memes, X_new, capacity_new, params: TransferParams | None = None) -> float:
    """Similarity of one pool member, normalized against the whole pool ``memes``."""
    memes = list(memes)
    idx = next(i for i, m in enumerate(memes) if m is meme)
    return float(similarity_scores(memes, X_new, capacity_new, params)[idx])


def selection_objective(mu, hsic, sim) -> float:
    mu = np.asarray(mu, dtype=np.float64)
    return float(mu @ hsic + np.sum(mu * mu * sim))


def solve_selection_qp(hsic: np.ndarray, sim: np.ndarray, tol: float = 1e-8,
                       max_iterations: int = 100_000) -> np.ndarray:
    """Maximize sum(mu * hsic) + sum(mu^2 * sim) over the probability simplex.

    ``sim <= 0`` makes the problem concave; projected gradient ascent with
    step 1/L (L = 2 max|sim|) converges to the maximizer. With all ``sim``
    zero the problem is linear and the best vertex is returned, ties going
    to the lowest index.
    """
    hsic = np.asarray(hsic, dtype=np.float64)
    sim = np.asarray(sim, dtype=np.float64)
    m = len(hsic)
    if m == 0:
        raise NoMemeAvailable("no relevant meme available")
    if np.any(sim > 0):
        raise ValueError("similarities must be nonpositive")
    lip = 2.0 * np.max(np.abs(sim))
    if lip == 0.0:
        mu = np.zeros(m)
        mu[int(np.argmax(hsic))] = 1.0
        return mu
    mu = np.full(m, 1.0 / m)
    for _ in range(max_iterations):
        nxt = project_simplex(mu + (hsic + 2.0 * sim * mu) / lip)
        if np.max(np.abs(nxt - mu)) < tol:
            mu = nxt
            break
        mu = nxt
    return mu


def labels_from_assignment(assign: np.ndarray) -> np.ndarray:
    a = np.asarray(assign)
    return np.where(a[:, None] == a[None, :], 1.0, -1.0)


def combine(memes, mu, name: str = "generalized", task_mean=None, capacity: float = 0.0) -> Meme:
    """Meme variation: the convex combination sum(mu_i * M_i)."""
    memes = list(memes)
    M = sum(w * m.matrix for w, m in zip(mu, memes))
    M = (M + M.T) / 2
    mean = memes[0].source_task_mean * 0 if task_mean is None else task_mean
    return Meme(M, name, mean, capacity)


def transform(X: np.ndarray, M) -> np.ndarray:
    """X' = L^T X with L L^T = M; pairwise distances become d_M."""
    return factorize(M).T @ np.asarray(X, dtype=np.float64)


def select_memes(som, X_new: np.ndarray, capacity_new: float, k: int,
                 params: TransferParams | None = None, seed=None) -> tuple[np.ndarray, Meme]:
    """Weights over the pool and the generalized meme ``M_t``.

    Alternates between labelling the new tasks with K-means (first on raw
    features, then on features transformed by the current ``M_t``) and
    solving the selection QP with the labels fixed.
    """
    params = params or TransferParams()
    memes = list(som)
    if not memes:
        raise NoMemeAvailable("no relevant meme available")
    X_new = np.asarray(X_new, dtype=np.float64)
    sim = similarity_scores(memes, X_new, capacity_new, params)
    k = max(1, min(k, X_new.shape[1]))
    feats = X_new
    mu = None
    for _ in range(max(1, params.rounds)):
        Y = labels_from_assignment(kmeans(feats, k, seed))
        hsic = np.array([hsic_score(X_new, m, Y) for m in memes])
        mu = solve_selection_qp(hsic, sim, params.qp_tolerance, params.qp_max_iterations)
        M_t = combine(memes, mu, task_mean=X_new.mean(axis=1), capacity=capacity_new)
        feats = transform(X_new, M_t)
    return mu, M_t


def _sq_dists(P: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((P[:, None, :] - C[None, :, :]) ** 2).sum(axis=-1)


def _seed_centers(P: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    # random data points, each later pick drawn with probability ~ squared distance (k-means++)
    n = len(P)
    idx = [int(rng.integers(n))]
    d2 = _sq_dists(P, P[idx]).min(axis=1)
    while len(idx) < k:
        total = d2.sum()
        if total <= 0:
            rest = np.setdiff1d(np.arange(n), idx)
            nxt = int(rng.choice(rest))
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        idx.append(nxt)
        d2 = np.minimum(d2, _sq_dists(P, P[[nxt]])[:, 0])
    return P[idx].copy()


def _fill_empty(P, centers, labels, k):
    for c in range(k):
        if np.any(labels == c):
            continue
        counts = np.bincount(labels, minlength=k)
        own = ((P - centers[labels]) ** 2).sum(axis=1)
        own[counts[labels] <= 1] = -1.0
        far = int(np.argmax(own))
        labels[far] = c
        centers[c] = P[far]
    return labels


def kmeans(X: np.ndarray, k: int, seed=None, max_iterations: int = 100, tol: float = 1e-10) -> np.ndarray:
    """Lloyd's algorithm on the columns of X; returns one cluster id per column.

    Initial centres are random data points drawn with k-means++ weighting.
    A cluster that empties is re-seeded with the point farthest from its own
    centroid, so every returned cluster is nonempty.
    """
    P = np.asarray(X, dtype=np.float64).T
    n = len(P)
    if not 1 <= k <= n:
        raise ValueError(f"cannot form {k} clusters from {n} points")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    centers = _seed_centers(P, k, rng)
    labels = np.argmin(_sq_dists(P, centers), axis=1)
    for _ in range(max_iterations):
        labels = _fill_empty(P, centers, labels, k)
        new = np.array([P[labels == c].mean(axis=0) for c in range(k)])
        shift = np.max(np.abs(new - centers))
        centers = new
        labels = np.argmin(_sq_dists(P, centers), axis=1)
        if shift < tol:
            break
    return _fill_empty(P, centers, labels, k)


def inertia(X: np.ndarray, labels: np.ndarray) -> float:
    P = np.asarray(X, dtype=np.float64).T
    return float(sum(((P[labels == c] - P[labels == c].mean(axis=0)) ** 2).sum() for c in np.unique(labels)))


def pds_order(X: np.ndarray, members) -> list[int]:
    """Pairwise distance sorting of one route's tasks.

    The two farthest-apart tasks open and close the route (smaller id first;
    ties go to the lexicographically smallest pair). The others follow in
    ascending distance from the opening task.
    """
    members = sorted(int(m) for m in members)
    if len(members) <= 1:
        return members
    P = np.asarray(X, dtype=np.float64)[:, members].T
    D = np.sqrt(_sq_dists(P, P))
    m = len(members)
    iu = np.triu_indices(m, 1)
    top = D[iu].max()
    pick = int(np.nonzero(D[iu] == top)[0][0])  # row-major order = lexicographic pairs
    a, b = iu[0][pick], iu[1][pick]
    rest = [k for k in range(m) if k not in (a, b)]
    rest.sort(key=lambda k: (D[a, k], members[k]))
    return [members[a]] + [members[k] for k in rest] + [members[b]]


def _repair_capacity(P, labels, centers, demand, capacity):
    k = len(centers)
    load = np.bincount(labels, weights=demand, minlength=k)
    stuck = set()
    while True:
        over = [c for c in range(k) if load[c] > capacity + 1e-9 and c not in stuck]
        if not over:
            return labels
        c = over[0]
        members = np.nonzero(labels == c)[0]
        far_first = members[np.argsort(-((P[members] - centers[c]) ** 2).sum(axis=1), kind="stable")]
        moved = False
        for t in far_first:
            dest = np.argsort(((centers - P[t]) ** 2).sum(axis=1), kind="stable")
            for d in dest:
                if d != c and load[d] + demand[t] <= capacity + 1e-9:
                    labels[t] = d
                    load[c] -= demand[t]
                    load[d] += demand[t]
                    moved = True
                    break
            if moved:
                break
        if not moved:
            stuck.add(c)


def _orient_route(order, instance: RoutingInstance) -> list[bool]:
    if instance.kind is not Kind.CARP:
        return [False] * len(order)
    c = instance.travel_cost
    pos = instance.depot
    out = []
    for t in order:
        h, tl = instance.heads[t], instance.tails[t]
        flip = c[pos, tl] < c[pos, h]
        out.append(bool(flip))
        pos = h if flip else tl
    return out


def imitate(instance: RoutingInstance, X_t: np.ndarray, seed=None) -> Solution:
    """Meme-biased solution from transformed task features.

    Tasks are clustered into ``fleet_size`` vehicles, overloaded clusters
    shed their outermost tasks to the nearest cluster with room, and each
    route is ordered by pairwise distance sorting. The result may still be
    capacity-infeasible when no cluster has room.
    """
    X_t = np.asarray(X_t, dtype=np.float64)
    n = instance.n_tasks
    if X_t.shape[1] != n:
        raise ValueError("feature columns do not match the instance tasks")
    k = max(1, min(instance.fleet_size, n))
    labels = kmeans(X_t, k, seed)
    P = X_t.T
    centers = np.array([P[labels == c].mean(axis=0) for c in range(k)])
    labels = _repair_capacity(P, labels.copy(), centers, instance.demands, instance.capacity)
    routes, orients = [], []
    for c in range(k):
        members = np.nonzero(labels == c)[0]
        if len(members) == 0:
            continue
        order = pds_order(X_t, members)
        routes.append(order)
        orients.append(_orient_route(order, instance))
    return from_routes(routes, instance, orients)


def build_population(instance: RoutingInstance, som, size: int, params: TransferParams | None = None,
                     rng: np.random.Generator | None = None, mode: str = "meme") -> list[Solution]:
    """Initial population for one run.

    ``mode`` is "meme" (imitation when the pool is nonempty, otherwise the
    baseline), "heuristic" (baseline) or "random" (random giant tours).
    """
    if size < 1:
        raise ValueError("population size must be at least 1")
    params = params or TransferParams()
    rng = np.random.default_rng() if rng is None else rng
    if mode == "random":
        return random_population(instance, size, rng)
    if mode == "heuristic" or som is None or len(som) == 0:
        return heuristic_population(instance, size, rng)
    if mode != "meme":
        raise ValueError(f"unknown initialization mode {mode!r}")
    X = featurize(instance, params.p)
    _, M_t = select_memes(som, X, instance.capacity, instance.fleet_size, params,
                          seed=int(rng.integers(2 ** 63)))
    X_t = transform(X, M_t)
    seeds = rng.integers(2 ** 63, size=size)
    return [imitate(instance, X_t, int(s)) for s in seeds]
