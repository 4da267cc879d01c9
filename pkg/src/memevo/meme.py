"""Memes: PSD task-space transformations learned from solved instances.

A meme ``M`` (p x p, PSD, trace p) rescales task features so that tasks
served by one vehicle move together and the service order of each route is
reflected by distances from the route's first task.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .routing import Solution

MAX_TRIPLES = 5000


@dataclass(frozen=True, eq=False)
class Meme:
    matrix: np.ndarray
    source_name: str
    source_task_mean: np.ndarray
    source_capacity: float

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("meme matrix must be square")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "source_task_mean", np.asarray(self.source_task_mean, dtype=np.float64))
        if self.source_task_mean.shape != (m.shape[0],):
            raise ValueError("task mean dimension does not match the meme")

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    def to_dict(self) -> dict:
        return {
            "source_name": self.source_name,
            "p": self.p,
            "capacity": self.source_capacity,
            "task_mean": [float(x) for x in self.source_task_mean],
            "matrix": [float(x) for x in self.matrix.ravel()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> Meme:
        p = int(d["p"])
        matrix = np.array(d["matrix"], dtype=np.float64)
        if matrix.size != p * p:
            raise ValueError(f"meme {d.get('source_name')!r}: matrix has {matrix.size} entries, expected {p * p}")
        return cls(matrix.reshape(p, p), str(d["source_name"]), np.array(d["task_mean"], dtype=np.float64),
                   float(d["capacity"]))

    def to_json(self) -> str:
        return _record_json(self)

    def check(self, tol: float = 1e-9) -> None:
        """Raise if the PSD / symmetry / trace invariants do not hold."""
        m = self.matrix
        if not np.allclose(m, m.T, atol=tol, rtol=0):
            raise ValueError("meme matrix is not symmetric")
        if np.linalg.eigvalsh((m + m.T) / 2).min() < -tol:
            raise ValueError("meme matrix is not positive semidefinite")
        if abs(np.trace(m) - self.p) > 1e-6:
            raise ValueError("meme trace differs from its dimension")


def _fmt17(x: float) -> str:
    # 17 significant digits round-trip any double exactly
    return format(x, ".17g")


def _record_json(m: Meme) -> str:
    d = m.to_dict()
    return '{"source_name": %s, "p": %d, "capacity": %s, "task_mean": [%s], "matrix": [%s]}' % (
        json.dumps(d["source_name"]), d["p"], _fmt17(d["capacity"]),
        ", ".join(_fmt17(x) for x in d["task_mean"]),
        ", ".join(_fmt17(x) for x in d["matrix"]))


def dumps_memes(memes) -> str:
    """JSON array of meme records, floats written with 17 significant digits."""
    return "[\n" + ",\n".join(_record_json(m) for m in memes) + "\n]\n"


def loads_memes(text: str) -> list[Meme]:
    data = json.loads(text) if text.strip() else []
    if not isinstance(data, list):
        raise ValueError("meme pool must be a JSON array")
    return [Meme.from_dict(d) for d in data]


@dataclass(frozen=True)
class ConstraintTriple:
    """Distance ordering D(i, j) > D(i, q): q is served between i and j."""

    i: int
    j: int
    q: int


@dataclass
class LearnParams:
    C: float = 10.0
    max_iterations: int = 500
    step_size: float = 1.0
    tolerance: float = 1e-7
    armijo: float = 1e-4
    max_triples: int = MAX_TRIPLES
    seed: int = 0

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")


def extract_constraints(solution: Solution) -> list[ConstraintTriple]:
    """Triples anchored at each route's first task, one per consecutive pair.

    For service order t1..tk the triples are (t1, t_{m+1}, t_m), m = 2..k-1.
    """
    out = []
    for route in solution.routes:
        ts = route.task_ids
        for m in range(1, len(ts) - 1):
            out.append(ConstraintTriple(ts[0], ts[m + 1], ts[m]))
    return out


def centering(n: int) -> np.ndarray:
    return np.eye(n) - np.ones((n, n)) / n


def hsic_score(X: np.ndarray, M, Y: np.ndarray) -> float:
    """tr(H K H Y) with K = X^T M X and H the centering matrix."""
    M = M.matrix if isinstance(M, Meme) else np.asarray(M)
    n = X.shape[1]
    Xc = X - X.mean(axis=1, keepdims=True)  # X H
    # tr(H X^T M X H Y) = tr(M (XH) Y (XH)^T)
    return float(np.sum(M * (Xc @ Y @ Xc.T))) if n else 0.0


def constraint_margin(X: np.ndarray, M, triple: ConstraintTriple) -> float:
    """d_M(v_i, v_j)^2 - d_M(v_i, v_q)^2; positive when the ordering holds."""
    M = M.matrix if isinstance(M, Meme) else np.asarray(M)
    a = X[:, triple.i] - X[:, triple.j]
    b = X[:, triple.i] - X[:, triple.q]
    return float(a @ M @ a - b @ M @ b)


class _Objective:
    """J(M) = -tr(X H Y H X^T M) + C/2 * sum(max(0, -margin)^2) and its gradient."""

    def __init__(self, X, Y, triples, C):
        Xc = X - X.mean(axis=1, keepdims=True)
        self.A = Xc @ Y @ Xc.T
        self.A = (self.A + self.A.T) / 2
        self.C = C
        if triples:
            idx = np.array([(t.i, t.j, t.q) for t in triples])
            self.dij = X[:, idx[:, 0]] - X[:, idx[:, 1]]
            self.diq = X[:, idx[:, 0]] - X[:, idx[:, 2]]
        else:
            p = X.shape[0]
            self.dij = self.diq = np.zeros((p, 0))

    def margins(self, M):
        return (np.einsum("km,kl,lm->m", self.dij, M, self.dij)
                - np.einsum("km,kl,lm->m", self.diq, M, self.diq))

    def value(self, M) -> float:
        v = np.maximum(0.0, -self.margins(M))
        return float(-np.sum(self.A * M) + 0.5 * self.C * np.sum(v * v))

    def gradient(self, M) -> np.ndarray:
        v = np.maximum(0.0, -self.margins(M))
        # each violated triple pulls along X (T_iq - T_ij) X^T
        g = -self.A + self.C * ((self.diq * v) @ self.diq.T - (self.dij * v) @ self.dij.T)
        return (g + g.T) / 2


def objective(X, Y, triples, M, C: float = 10.0) -> float:
    return _Objective(X, Y, triples, C).value(np.asarray(M, dtype=np.float64))


def objective_gradient(X, Y, triples, M, C: float = 10.0) -> np.ndarray:
    return _Objective(X, Y, triples, C).gradient(np.asarray(M, dtype=np.float64))


def project_simplex(v: np.ndarray, z: float = 1.0) -> np.ndarray:
    """Euclidean projection of v onto {x >= 0, sum(x) = z}."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - z
    ind = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def project_psd_trace(M: np.ndarray, trace: float) -> np.ndarray:
    """Nearest (Frobenius) PSD matrix with the given trace."""
    S = (M + M.T) / 2
    w, U = np.linalg.eigh(S)
    w = project_simplex(w, trace)
    P = (U * w) @ U.T
    return (P + P.T) / 2


def _subsample(triples, limit, seed):
    if len(triples) <= limit:
        return list(triples)
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(len(triples), limit, replace=False))
    return [triples[k] for k in keep]


def learn_meme(X: np.ndarray, Y: np.ndarray, constraints, params: LearnParams | None = None,
               source_name: str = "", capacity: float = 0.0, history: list | None = None) -> Meme:
    """Learn a meme by projected gradient descent on the penalized HSIC objective.

    Minimizes ``-tr(X H Y H X^T M) + C/2 * sum of squared constraint
    violations`` over PSD matrices with trace ``p``, starting from the
    identity. Each step backtracks (halving from ``params.step_size``) until
    the Armijo condition holds, so the objective never increases. If given,
    ``history`` receives the objective value of every iterate.
    """
    params = params or LearnParams()
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix has non-finite entries")
    p, n = X.shape
    if n < 2:
        raise ValueError("need at least two tasks to learn a meme")
    if Y.shape != (n, n):
        raise ValueError("label matrix does not match the task count")
    for t in constraints:
        if not all(0 <= k < n for k in (t.i, t.j, t.q)):
            raise ValueError(f"constraint {t} references an unknown task")
    triples = _subsample(list(constraints), params.max_triples, params.seed)
    obj = _Objective(X, Y, triples, params.C)

    M = np.eye(p)
    J = obj.value(M)
    if history is None:
        history = []
    history.append(J)
    for _ in range(params.max_iterations):
        G = obj.gradient(M)
        t = params.step_size
        accepted = False
        for _ in range(60):
            M_new = project_psd_trace(M - t * G, p)
            J_new = obj.value(M_new)
            if J_new <= J + params.armijo * np.sum(G * (M_new - M)):
                accepted = True
                break
            t /= 2
        if not accepted or J_new > J:
            break
        change = abs(J - J_new) / max(abs(J), 1e-12)
        M, J = M_new, J_new
        history.append(J)
        if change < params.tolerance:
            break
    return Meme(M, source_name, X.mean(axis=1), capacity)


def factorize(M) -> np.ndarray:
    """L with L L^T = M from the symmetric eigendecomposition M = U diag(w) U^T.

    Returns the symmetric root U diag(sqrt(w)) U^T, so feature axes keep
    their meaning (diag(4, 1) gives diag(2, 1)). Negative w are clipped.
    """
    M = M.matrix if isinstance(M, Meme) else np.asarray(M, dtype=np.float64)
    if np.array_equal(M, np.eye(M.shape[0])):
        return np.eye(M.shape[0])
    w, U = np.linalg.eigh((M + M.T) / 2)
    L = (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T
    return (L + L.T) / 2
