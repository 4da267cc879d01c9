"""Routing instances: CVRP (TSPLIB) and CARP (egl) parsing, shortest paths."""
from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra


class ParseError(ValueError):
    """Raised for malformed or inconsistent instance files."""


class Kind(str, Enum):
    CVRP = "CVRP"
    CARP = "CARP"


@dataclass(frozen=True)
class Task:
    """A demand-bearing vertex (CVRP, head == tail) or required edge (CARP)."""

    id: int
    head: int
    tail: int
    demand: float
    service_cost: float = 0.0


@dataclass(frozen=True, eq=False)
class RoutingInstance:
    kind: Kind
    name: str
    n_vertices: int
    depot: int
    tasks: tuple[Task, ...]
    capacity: float
    fleet_size: int
    travel_cost: np.ndarray
    lower_bound: float | None = None
    # CVRP only: vertex coordinates, (n_vertices, 2)
    coords: np.ndarray | None = None
    # CARP only: every graph edge as (u, v, cost, demand); demand 0 when not required
    edges: tuple[tuple[int, int, float, float], ...] = ()
    edge_weight_type: str = "EUC_2D"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.capacity > 0:
            raise ValueError(f"capacity must be positive, got {self.capacity}")
        c = self.travel_cost
        if c.shape != (self.n_vertices, self.n_vertices):
            raise ValueError("travel_cost shape does not match vertex count")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise ValueError("travel_cost must be finite and nonnegative")
        if not np.allclose(c, c.T) or np.any(np.diag(c) != 0):
            raise ValueError("travel_cost must be symmetric with zero diagonal")
        if not 0 <= self.depot < self.n_vertices:
            raise ValueError(f"depot {self.depot} out of range")
        for t in self.tasks:
            if not (0 <= t.head < self.n_vertices and 0 <= t.tail < self.n_vertices):
                raise ValueError(f"task {t.id} references an unknown vertex")
            if not t.demand > 0:
                raise ValueError(f"task {t.id} has nonpositive demand")
            if t.demand > self.capacity:
                raise ValueError(f"task {t.id} demand {t.demand} exceeds capacity")
        c.setflags(write=False)

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    @cached_property
    def heads(self) -> np.ndarray:
        return np.array([t.head for t in self.tasks], dtype=np.int64)

    @cached_property
    def tails(self) -> np.ndarray:
        return np.array([t.tail for t in self.tasks], dtype=np.int64)

    @cached_property
    def demands(self) -> np.ndarray:
        return np.array([t.demand for t in self.tasks], dtype=np.float64)

    @cached_property
    def service_costs(self) -> np.ndarray:
        return np.array([t.service_cost for t in self.tasks], dtype=np.float64)

    @cached_property
    def task_distances(self) -> np.ndarray:
        """Task-to-task distance: min over the four endpoint pairings."""
        c = self.travel_cost
        h, t = self.heads, self.tails
        d = np.minimum.reduce([c[np.ix_(h, h)], c[np.ix_(h, t)], c[np.ix_(t, h)], c[np.ix_(t, t)]])
        np.fill_diagonal(d, 0.0)
        return d

    @cached_property
    def average_task_travel(self) -> float:
        """Mean depot/task endpoint travel cost; scales the infeasibility penalty."""
        c = self.travel_cost
        ends = np.concatenate([[self.depot], self.heads, self.tails])
        sub = c[np.ix_(ends, ends)]
        n = len(ends)
        return float(sub.sum() / (n * (n - 1))) if n > 1 else 1.0

    def same_as(self, other: RoutingInstance) -> bool:
        """Structural equality, used for round-trip checks."""
        if not isinstance(other, RoutingInstance):
            return False
        if (self.kind, self.name, self.n_vertices, self.depot, self.tasks, self.capacity,
                self.fleet_size, self.lower_bound, self.edges, self.edge_weight_type) != (
                other.kind, other.name, other.n_vertices, other.depot, other.tasks,
                other.capacity, other.fleet_size, other.lower_bound, other.edges,
                other.edge_weight_type):
            return False
        if (self.coords is None) != (other.coords is None):
            return False
        if self.coords is not None and not np.array_equal(self.coords, other.coords):
            return False
        return np.array_equal(self.travel_cost, other.travel_cost)


def _num(s: str) -> float:
    v = float(s)
    return int(v) if v.is_integer() else v


_LB_RE = re.compile(r"(?:optimal|best)\s+value\s*:?\s*([0-9.]+)", re.I)


def _lower_bound_from_comment(comment: str) -> float | None:
    m = _LB_RE.search(comment)
    if m:
        return _num(m.group(1))
    m = re.match(r"\s*\(?\s*([0-9]+(?:\.[0-9]+)?)\b", comment)
    return _num(m.group(1)) if m else None


def euclidean_costs(coords: np.ndarray, edge_weight_type: str = "EUC_2D") -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    d = np.sqrt((diff ** 2).sum(axis=-1))
    if edge_weight_type.upper() == "EUC_2D":
        # TSPLIB nint convention; published Augerat/CE optima assume it
        d = np.floor(d + 0.5)
    return d


def parse_cvrp(text: str) -> RoutingInstance:
    """Parse a TSPLIB-style CVRP file."""
    header: dict[str, str] = {}
    coords: dict[int, tuple[float, float]] = {}
    demand: dict[int, float] = {}
    depots: list[int] = []
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        key = line.split(":")[0].strip().upper() if ":" in line else line.split()[0].upper()
        if key == "EOF":
            break
        if key.endswith("_SECTION"):
            section = key
            continue
        if ":" in line and not line[0].isdigit() and not line[0] == "-":
            k, v = line.split(":", 1)
            header[k.strip().upper()] = v.strip()
            section = None
            continue
        parts = line.split()
        try:
            if section == "NODE_COORD_SECTION":
                if len(parts) < 3:
                    raise ValueError("expected 'id x y'")
                coords[int(parts[0])] = (float(parts[1]), float(parts[2]))
            elif section == "DEMAND_SECTION":
                if len(parts) != 2:
                    raise ValueError("expected 'id demand'")
                demand[int(parts[0])] = _num(parts[1])
            elif section == "DEPOT_SECTION":
                for p in parts:
                    if int(p) == -1:
                        section = None
                        break
                    depots.append(int(p))
            else:
                raise ValueError(f"unexpected content outside any section: {line!r}")
        except ValueError as exc:
            raise ParseError(f"line {lineno} ({section or 'header'}): {exc}") from None

    if "CAPACITY" not in header:
        raise ParseError("missing CAPACITY")
    try:
        capacity = _num(header["CAPACITY"])
    except ValueError:
        raise ParseError(f"CAPACITY is not a number: {header['CAPACITY']!r}") from None
    if capacity <= 0:
        raise ParseError(f"CAPACITY must be positive, got {capacity}")
    if not coords:
        raise ParseError("missing or empty NODE_COORD_SECTION")
    if not demand:
        raise ParseError("missing or empty DEMAND_SECTION")
    dim = int(header.get("DIMENSION", len(coords)))
    ids = sorted(coords)
    if ids != list(range(1, dim + 1)):
        raise ParseError(f"NODE_COORD_SECTION: expected node ids 1..{dim}")
    if set(demand) - set(ids):
        raise ParseError("DEMAND_SECTION references unknown node ids")
    if len(depots) != 1:
        raise ParseError("DEPOT_SECTION: exactly one depot supported")
    depot = depots[0] - 1
    if not 0 <= depot < dim:
        raise ParseError("DEPOT_SECTION: depot id out of range")

    name = header.get("NAME", "unnamed")
    ewt = header.get("EDGE_WEIGHT_TYPE", "EUC_2D").upper()
    xy = np.array([coords[i] for i in ids], dtype=np.float64)
    travel = euclidean_costs(xy, ewt)

    tasks = []
    for v in ids:
        d = demand.get(v, 0)
        if d > 0 and v - 1 != depot:
            tasks.append(Task(len(tasks), v - 1, v - 1, d))
    if any(t.demand > capacity for t in tasks):
        raise ParseError("DEMAND_SECTION: a demand exceeds CAPACITY")
    m = re.search(r"-k(\d+)\s*$", name)
    fleet = int(m.group(1)) if m else math.ceil(sum(t.demand for t in tasks) / capacity)
    return RoutingInstance(
        kind=Kind.CVRP, name=name, n_vertices=dim, depot=depot, tasks=tuple(tasks),
        capacity=capacity, fleet_size=max(fleet, 1), travel_cost=travel,
        lower_bound=_lower_bound_from_comment(header.get("COMMENT", "")),
        coords=xy, edge_weight_type=ewt,
    )


# egl files are distributed with Spanish keywords; accept both vocabularies
_CARP_KEYS = {
    "NOMBRE": "NAME", "NAME": "NAME",
    "COMENTARIO": "COMMENT", "COMMENT": "COMMENT",
    "VERTICES": "VERTICES",
    "ARISTAS_REQ": "REQUIRED_EDGES", "REQUIRED_EDGES": "REQUIRED_EDGES",
    "ARISTAS_NOREQ": "NON_REQUIRED_EDGES", "NON_REQUIRED_EDGES": "NON_REQUIRED_EDGES",
    "VEHICULOS": "VEHICLES", "VEHICLES": "VEHICLES",
    "CAPACIDAD": "CAPACITY", "CAPACITY": "CAPACITY",
    "TIPO_COSTES_ARISTAS": "COST_TYPE", "COST_TYPE": "COST_TYPE",
    "COSTE_TOTAL_REQ": "TOTAL_REQ_COST", "TOTAL_REQ_COST": "TOTAL_REQ_COST",
    "DEPOSITO": "DEPOT", "DEPOT": "DEPOT",
    "LOWER_BOUND": "LOWER_BOUND",
}
_EDGE_RE = re.compile(
    r"^\(\s*(\d+)\s*,\s*(\d+)\s*\)\s*(?:coste|cost)\s+([0-9.eE+-]+)"
    r"(?:\s+(?:demanda|demand)\s+([0-9.eE+-]+))?\s*$",
    re.I,
)


def parse_carp(text: str) -> RoutingInstance:
    """Parse an egl-format CARP file."""
    header: dict[str, str] = {}
    edges: list[tuple[int, int, float, float]] = []
    block = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.upper() == "END" or line.upper() == "EOF":
            continue
        if line.startswith("("):
            m = _EDGE_RE.match(line)
            if not m or block is None:
                raise ParseError(f"line {lineno}: malformed edge line {line!r}")
            u, v, cost = int(m.group(1)), int(m.group(2)), _num(m.group(3))
            dem = _num(m.group(4)) if m.group(4) is not None else 0
            if block == "REQ" and m.group(4) is None:
                raise ParseError(f"line {lineno}: required edge without demand")
            edges.append((u - 1, v - 1, cost, dem if block == "REQ" else 0))
            continue
        if ":" not in line:
            raise ParseError(f"line {lineno}: unrecognised line {line!r}")
        k, v = (s.strip() for s in line.split(":", 1))
        k = k.upper()
        if k in ("LISTA_ARISTAS_REQ", "LIST_REQ_EDGES"):
            block = "REQ"
        elif k in ("LISTA_ARISTAS_NOREQ", "LIST_NOREQ_EDGES"):
            block = "NOREQ"
        elif k in _CARP_KEYS:
            header[_CARP_KEYS[k]] = v
            block = None
        else:
            raise ParseError(f"line {lineno}: unknown header key {k!r}")

    for key in ("VERTICES", "CAPACITY", "DEPOT"):
        if key not in header:
            raise ParseError(f"missing {key}")
    try:
        n_vertices = int(header["VERTICES"])
        capacity = _num(header["CAPACITY"])
        depot = int(header["DEPOT"]) - 1
    except ValueError as exc:
        raise ParseError(f"header: {exc}") from None
    if capacity <= 0:
        raise ParseError(f"CAPACITY must be positive, got {capacity}")
    if not 0 <= depot < n_vertices:
        raise ParseError("DEPOT out of range")
    for u, v, cost, _ in edges:
        if not (0 <= u < n_vertices and 0 <= v < n_vertices):
            raise ParseError(f"edge ({u + 1},{v + 1}) references an unknown vertex")
        if cost < 0:
            raise ParseError(f"edge ({u + 1},{v + 1}) has negative cost")

    travel = shortest_paths(n_vertices, [(u, v, c) for u, v, c, _ in edges],
                            required=[depot] + [x for u, v, _, d in edges if d > 0 for x in (u, v)])
    tasks = []
    for u, v, cost, dem in edges:
        if dem > 0:
            if dem > capacity:
                raise ParseError(f"edge ({u + 1},{v + 1}) demand exceeds CAPACITY")
            tasks.append(Task(len(tasks), u, v, dem, cost))
    if not tasks:
        raise ParseError("no required edges")
    comment = header.get("COMMENT", "")
    lb = _num(header["LOWER_BOUND"]) if "LOWER_BOUND" in header else _lower_bound_from_comment(comment)
    return RoutingInstance(
        kind=Kind.CARP, name=header.get("NAME", "unnamed"), n_vertices=n_vertices, depot=depot,
        tasks=tuple(tasks), capacity=capacity,
        fleet_size=max(1, math.ceil(sum(t.demand for t in tasks) / capacity)),
        travel_cost=travel, lower_bound=lb, edges=tuple(edges), edge_weight_type="EXPLICIT",
        extra={"vehicles": header.get("VEHICLES")},
    )


def shortest_paths(n_vertices: int, edges, required=None) -> np.ndarray:
    """All-pairs shortest path lengths of an undirected graph (Dijkstra).

    ``edges`` is an iterable of ``(u, v, cost)`` with 0-based ids. Parallel
    edges keep the cheapest cost. Raises ``ValueError`` when a pair among
    ``required`` (all vertices by default) is disconnected.
    """
    w = np.full((n_vertices, n_vertices), np.inf)
    for u, v, c in edges:
        if c < 0:
            raise ValueError("edge costs must be nonnegative")
        if c < w[u, v]:
            w[u, v] = w[v, u] = c
    rows, cols = np.nonzero(np.isfinite(w))
    # csgraph treats explicit zeros as missing edges; nudge them to a tiny positive weight
    vals = w[rows, cols]
    vals = np.where(vals == 0, np.finfo(float).tiny, vals)
    graph = csr_matrix((vals, (rows, cols)), shape=(n_vertices, n_vertices))
    dist = dijkstra(graph, directed=False)
    dist[dist <= np.finfo(float).tiny * n_vertices] = 0.0
    idx = np.arange(n_vertices) if required is None else np.unique(np.asarray(required, dtype=int))
    if not np.all(np.isfinite(dist[np.ix_(idx, idx)])):
        raise ValueError("graph is disconnected: some required vertex is unreachable")
    # vertices nobody needs may stay unreachable; park them at a finite sentinel
    if not np.all(np.isfinite(dist)):
        big = np.nanmax(np.where(np.isfinite(dist), dist, np.nan)) * 10 + 1
        dist[~np.isfinite(dist)] = big
    dist = np.minimum(dist, dist.T)
    np.fill_diagonal(dist, 0.0)
    return dist


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def to_text(instance: RoutingInstance) -> str:
    """Serialize back to the instance's native file format."""
    if instance.kind is Kind.CVRP:
        comment = f"(Optimal value: {_fmt(instance.lower_bound)})" if instance.lower_bound is not None else "()"
        demand = {t.head: t.demand for t in instance.tasks}
        lines = [
            f"NAME : {instance.name}", f"COMMENT : {comment}", "TYPE : CVRP",
            f"DIMENSION : {instance.n_vertices}", f"EDGE_WEIGHT_TYPE : {instance.edge_weight_type}",
            f"CAPACITY : {_fmt(instance.capacity)}", "NODE_COORD_SECTION",
        ]
        lines += [f" {i + 1} {_fmt(x)} {_fmt(y)}" for i, (x, y) in enumerate(instance.coords)]
        lines.append("DEMAND_SECTION")
        lines += [f"{i + 1} {_fmt(demand.get(i, 0))}" for i in range(instance.n_vertices)]
        lines += ["DEPOT_SECTION", f" {instance.depot + 1}", " -1", "EOF"]
        return "\n".join(lines) + "\n"
    req = [e for e in instance.edges if e[3] > 0]
    noreq = [e for e in instance.edges if e[3] <= 0]
    lines = [f"NAME : {instance.name}"]
    if instance.lower_bound is not None:
        lines.append(f"LOWER_BOUND : {_fmt(instance.lower_bound)}")
    lines += [
        f"VERTICES : {instance.n_vertices}", f"REQUIRED_EDGES : {len(req)}",
        f"NON_REQUIRED_EDGES : {len(noreq)}", f"CAPACITY : {_fmt(instance.capacity)}",
        "LIST_REQ_EDGES :",
    ]
    lines += [f"({u + 1},{v + 1}) cost {_fmt(c)} demand {_fmt(d)}" for u, v, c, d in req]
    lines.append("LIST_NOREQ_EDGES :")
    lines += [f"({u + 1},{v + 1}) cost {_fmt(c)}" for u, v, c, _ in noreq]
    lines += [f"DEPOT : {instance.depot + 1}", "END"]
    return "\n".join(lines) + "\n"


def load_instance(path) -> RoutingInstance:
    """Read a file, choosing the parser from its contents."""
    text = Path(path).read_text()
    head = text[:4000].upper()
    if "NODE_COORD_SECTION" in head or "DEMAND_SECTION" in text.upper():
        return parse_cvrp(text)
    return parse_carp(text)


DATA_DIR = Path(__file__).parent / "data"
# extra directories (os.pathsep separated) searched for benchmark files
BENCHMARK_ENV = "MEMEVO_BENCHMARK_DIR"


def benchmark_dirs() -> list[Path]:
    extra = [Path(p) for p in os.environ.get(BENCHMARK_ENV, "").split(os.pathsep) if p]
    return extra + [DATA_DIR]


def find_instance(*names: str) -> Path | None:
    """First existing benchmark file matching any of ``names`` (with or without extension)."""
    for d in benchmark_dirs():
        for name in names:
            for suffix in ("", ".vrp", ".dat", ".txt"):
                p = d / f"{name}{suffix}"
                if p.is_file():
                    return p
    return None


def bundled(name: str) -> RoutingInstance:
    """Load one of the instance files shipped with the package."""
    for suffix in ("", ".vrp", ".dat"):
        p = DATA_DIR / f"{name}{suffix}"
        if p.is_file():
            return load_instance(p)
    raise FileNotFoundError(f"no bundled instance named {name!r}")
