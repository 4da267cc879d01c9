import itertools

import numpy as np
import pytest
from hypothesis import settings

from memevo.instance import Kind, RoutingInstance, Task, euclidean_costs, shortest_paths

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def make_cvrp(coords, demands, capacity, depot=0, name="toy", fleet=None, rounded=False):
    """Instance from raw coordinates; vertex ``depot`` is the depot, others are customers."""
    coords = np.asarray(coords, dtype=float)
    tasks, k = [], 0
    for v, d in enumerate(demands):
        if v != depot and d > 0:
            tasks.append(Task(k, v, v, float(d)))
            k += 1
    cost = euclidean_costs(coords, "EUC_2D" if rounded else "EXACT")
    if fleet is None:
        fleet = max(1, int(np.ceil(sum(t.demand for t in tasks) / capacity)))
    return RoutingInstance(Kind.CVRP, name, len(coords), depot, tuple(tasks), float(capacity), fleet,
                           cost, coords=coords, edge_weight_type="EUC_2D" if rounded else "EXACT")


def random_cvrp(rng, n_tasks, capacity=None, name="rand"):
    coords = rng.uniform(0, 100, (n_tasks + 1, 2))
    demands = np.concatenate([[0], rng.integers(1, 10, n_tasks)])
    cap = capacity if capacity is not None else max(int(demands.max()), int(rng.integers(10, 30)))
    return make_cvrp(coords, demands, cap, name=name)


def random_graph(rng, n, extra=None):
    """Connected undirected graph: random spanning tree plus extra edges."""
    edges = {}
    for v in range(1, n):
        u = int(rng.integers(v))
        edges[(u, v)] = float(rng.integers(1, 20))
    for _ in range(n if extra is None else extra):
        u, v = sorted(rng.choice(n, 2, replace=False).tolist())
        edges[(u, v)] = float(rng.integers(1, 20))
    return [(u, v, c) for (u, v), c in edges.items()]


def random_carp(rng, n_vertices=8, n_required=6, name="carp"):
    edges = random_graph(rng, n_vertices)
    req = rng.choice(len(edges), min(n_required, len(edges)), replace=False)
    demands = rng.integers(1, 6, len(req))
    cap = float(max(demands.max(), rng.integers(6, 15)))
    dist = shortest_paths(n_vertices, edges)
    tasks = tuple(Task(k, edges[e][0], edges[e][1], float(d), edges[e][2]) for k, (e, d) in enumerate(zip(req, demands)))
    all_edges = tuple((u, v, c, float(demands[list(req).index(i)]) if i in req else 0.0)
                      for i, (u, v, c) in enumerate(edges))
    return RoutingInstance(Kind.CARP, name, n_vertices, 0, tasks, cap,
                           max(1, int(np.ceil(demands.sum() / cap))), dist, edges=all_edges,
                           edge_weight_type="EXPLICIT")


def floyd_warshall(n, edges):
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for u, v, c in edges:
        d[u, v] = d[v, u] = min(d[u, v], c)
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d


def naive_cost(instance, routes, orients=None):
    """Leg-by-leg cost of a list of routes, written independently of the kernels."""
    c = instance.travel_cost
    total = 0.0
    for r, route in enumerate(routes):
        pos = instance.depot
        for k, t in enumerate(route):
            task = instance.tasks[t]
            flip = bool(orients[r][k]) if orients is not None else False
            start, end = (task.tail, task.head) if flip else (task.head, task.tail)
            total += c[pos, start] + task.service_cost
            pos = end
        total += c[pos, instance.depot]
    return total


def contiguous_splits(n):
    """Every way to cut a sequence of length n into nonempty contiguous pieces."""
    for mask in itertools.product([False, True], repeat=max(n - 1, 0)):
        cuts = [0] + [i + 1 for i, m in enumerate(mask) if m] + [n]
        yield [(cuts[k], cuts[k + 1]) for k in range(len(cuts) - 1)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def clustered_instance(k=4, per=4, radius=100.0, spacing=3.0):
    """k clusters of collinear tasks on rays from the depot, each filling one vehicle.

    Every route must carry exactly one cluster's demand, and serving a ray out
    and back costs twice its far end, so the optimum is one route per ray.
    Returns the instance, the optimal routes and the optimal cost.
    """
    coords, demands, routes = [[0.0, 0.0]], [0], []
    for c in range(k):
        angle = 2 * np.pi * c / k
        u = np.array([np.cos(angle), np.sin(angle)])
        route = []
        for j in range(per):
            coords.append((radius + spacing * j) * u)
            demands.append(1 + j)
            route.append(len(coords) - 2)
        routes.append(route)
    cap = sum(1 + j for j in range(per))
    inst = make_cvrp(coords, demands, cap, name=f"clusters-k{k}", fleet=k)
    return inst, routes, 2 * k * (radius + spacing * (per - 1))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(mod.RESULTS):
            terminalreporter.write_line(mod.RESULTS[n])
