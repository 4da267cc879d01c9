"""Solutions, cost evaluation, giant-tour split and label matrices."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .instance import Kind, RoutingInstance


class InfeasibleError(ValueError):
    """No capacity-feasible solution can be built."""


@dataclass(frozen=True)
class Route:
    task_ids: tuple[int, ...]
    orientations: tuple[bool, ...]
    load: float


@dataclass(frozen=True)
class Chromosome:
    giant_tour: np.ndarray
    orientations: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.giant_tour)
        if not np.array_equal(np.sort(t), np.arange(len(t))):
            raise ValueError("giant tour must be a permutation of task ids")


@dataclass(frozen=True, eq=False)
class Solution:
    """Routes stored flat: route r serves ``tour[bounds[r]:bounds[r+1]]``."""

    tour: np.ndarray
    orient: np.ndarray
    bounds: np.ndarray
    loads: np.ndarray
    total_cost: float
    feasible: bool
    excess: float = 0.0

    @cached_property
    def routes(self) -> tuple[Route, ...]:
        out = []
        for r in range(len(self.bounds) - 1):
            lo, hi = self.bounds[r], self.bounds[r + 1]
            out.append(Route(tuple(int(t) for t in self.tour[lo:hi]),
                             tuple(bool(o) for o in self.orient[lo:hi]),
                             float(self.loads[r])))
        return tuple(out)

    @property
    def n_routes(self) -> int:
        return len(self.bounds) - 1

    def chromosome(self) -> Chromosome:
        return Chromosome(self.tour.copy(), self.orient.copy())

    def penalized(self, penalty_weight: float) -> float:
        return self.total_cost + penalty_weight * self.excess


def _check_cover(tour: np.ndarray, n: int) -> None:
    if len(tour) != n or np.any(tour < 0) or np.any(tour >= n):
        raise ValueError("solution references unknown task ids or misses tasks")
    if len(np.unique(tour)) != n:
        raise ValueError("a task is served more than once")


def cost_of(solution: Solution, instance: RoutingInstance) -> float:
    """Total travel (plus service, for CARP) cost of a solution."""
    tour = solution.tour
    if len(tour) and (tour.min() < 0 or tour.max() >= instance.n_tasks):
        raise ValueError("unknown task id in solution")
    return float(_kernels.flat_cost(tour, solution.orient, solution.bounds, instance.heads,
                                    instance.tails, instance.service_costs, instance.travel_cost,
                                    instance.depot))


def make_solution(tour, orient, bounds, instance: RoutingInstance, check: bool = True) -> Solution:
    """Build a Solution from flat arrays; loads, feasibility and cost are computed.

    ``check=False`` skips the coverage check for arrays produced by the
    compiled kernels, which preserve permutations by construction.
    """
    tour = np.ascontiguousarray(tour, dtype=np.int64)
    orient = np.ascontiguousarray(orient, dtype=np.int8)
    bounds = np.ascontiguousarray(bounds, dtype=np.int64)
    if check:
        _check_cover(tour, instance.n_tasks)
        if bounds[0] != 0 or bounds[-1] != len(tour) or np.any(np.diff(bounds) <= 0):
            raise ValueError("route bounds must partition the tour into nonempty routes")
    loads = np.add.reduceat(instance.demands[tour], bounds[:-1]) if len(tour) else np.zeros(0)
    excess = float(np.maximum(loads - instance.capacity, 0).sum())
    sol = Solution(tour, orient, bounds, loads, 0.0, excess <= 1e-9, excess)
    object.__setattr__(sol, "total_cost", cost_of(sol, instance))
    return sol


def from_routes(routes, instance: RoutingInstance, orientations=None) -> Solution:
    """Solution from a list of task-id lists (orientations default to False)."""
    routes = [list(r) for r in routes if len(r)]
    tour = np.array([t for r in routes for t in r], dtype=np.int64)
    bounds = np.concatenate([[0], np.cumsum([len(r) for r in routes])]).astype(np.int64)
    if orientations is None:
        orient = np.zeros(len(tour), dtype=np.int8)
    else:
        orient = np.array([bool(o) for r in orientations if len(r) for o in r], dtype=np.int8)
    return make_solution(tour, orient, bounds, instance)


def split(tour: Chromosome, instance: RoutingInstance) -> Solution:
    """Minimum-cost partition of a giant tour into contiguous feasible routes."""
    if instance.demands.max(initial=0) > instance.capacity:
        raise InfeasibleError("a task demand exceeds vehicle capacity")
    t = np.ascontiguousarray(tour.giant_tour, dtype=np.int64)
    o = np.ascontiguousarray(tour.orientations, dtype=np.int8)
    bounds = _kernels.split(t, o, instance.heads, instance.tails, instance.service_costs,
                            instance.demands, instance.travel_cost, instance.depot, instance.capacity)
    if len(bounds) == 0:
        raise InfeasibleError("giant tour has no capacity-feasible split")
    return make_solution(t, o, bounds, instance, check=False)


def labels_of(solution: Solution) -> np.ndarray:
    """+1/-1 co-membership matrix: Y[i, j] = +1 iff tasks i and j share a route."""
    n = len(solution.tour)
    route_of = np.empty(n, dtype=np.int64)
    for r in range(solution.n_routes):
        route_of[solution.tour[solution.bounds[r]:solution.bounds[r + 1]]] = r
    return np.where(route_of[:, None] == route_of[None, :], 1.0, -1.0)


def is_carp(instance: RoutingInstance) -> bool:
    return instance.kind is Kind.CARP
