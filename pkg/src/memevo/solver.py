"""Memetic evolutionary solver shared by CVRP and CARP."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, routing
from .instance import Kind, RoutingInstance
from .routing import Chromosome, Solution, make_solution, split


@dataclass
class EvolveParams:
    population_size: int = 30
    p_ls: float = 0.2
    max_evaluations: int = 100_000
    # cap on improving moves per local search call
    ls_max_moves: int = 10_000
    tournament_size: int = 2


def default_params(instance: RoutingInstance, **overrides) -> EvolveParams:
    budget = 100_000 if instance.kind is Kind.CVRP else 500_000
    return EvolveParams(**{"max_evaluations": budget, **overrides})


@dataclass
class ConvergenceTrace:
    evaluations: list[int] = field(default_factory=list)
    best_costs: list[float] = field(default_factory=list)
    # cost evaluations spent by the run, set when it finishes
    total_evaluations: int = 0

    def record(self, evaluations: int, cost: float) -> None:
        self.evaluations.append(int(evaluations))
        self.best_costs.append(float(cost))

    def evaluations_to_reach(self, target: float) -> int | None:
        """First evaluation count at which the best cost is <= target."""
        for e, c in zip(self.evaluations, self.best_costs):
            if c <= target + 1e-9:
                return e
        return None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["evaluations", "best_cost"])
            for e, c in zip(self.evaluations, self.best_costs):
                w.writerow([e, repr(c)])

    @classmethod
    def from_csv(cls, path) -> ConvergenceTrace:
        tr = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                tr.record(int(row["evaluations"]), float(row["best_cost"]))
        return tr


def local_search(solution: Solution, instance: RoutingInstance, budget: int = 10_000,
                 rng: np.random.Generator | None = None) -> Solution:
    """First-improvement descent with relocate, swap, 2-opt and 2-opt* moves.

    Trial moves are priced by constant-time deltas; the returned solution is
    evaluated once with ``cost_of``. ``budget`` bounds the number of
    improving moves applied. The input should be capacity-feasible; moves
    never overload a route.
    """
    n = instance.n_tasks
    order = np.arange(n, dtype=np.int64) if rng is None else rng.permutation(n).astype(np.int64)
    t, o, b, moves = _kernels.local_search(
        solution.tour, solution.orient, solution.bounds, instance.heads, instance.tails,
        instance.demands, instance.travel_cost, instance.depot, instance.capacity,
        instance.kind is Kind.CARP, order, int(budget))
    return make_solution(t, o, b, instance, check=False)


def random_chromosome(instance: RoutingInstance, rng: np.random.Generator) -> Chromosome:
    n = instance.n_tasks
    orient = rng.integers(0, 2, n).astype(np.int8) if instance.kind is Kind.CARP else np.zeros(n, np.int8)
    return Chromosome(rng.permutation(n).astype(np.int64), orient)


def nearest_neighbor_chromosome(instance: RoutingInstance) -> Chromosome:
    """Greedy giant tour: from the depot, repeatedly serve the closest unserved task."""
    c = instance.travel_cost
    heads, tails = instance.heads, instance.tails
    carp = instance.kind is Kind.CARP
    left = set(range(instance.n_tasks))
    pos = instance.depot
    tour, orient = [], []
    while left:
        best = None
        for t in sorted(left):
            d0 = c[pos, heads[t]]
            cand = (d0, t, 0)
            if carp and c[pos, tails[t]] < d0:
                cand = (c[pos, tails[t]], t, 1)
            if best is None or cand < best:
                best = cand
        _, t, o = best
        tour.append(t)
        orient.append(o)
        left.discard(t)
        pos = heads[t] if o else tails[t]
    return Chromosome(np.array(tour, dtype=np.int64), np.array(orient, dtype=np.int8))


def random_population(instance: RoutingInstance, size: int, rng: np.random.Generator) -> list[Solution]:
    return [split(random_chromosome(instance, rng), instance) for _ in range(size)]


def heuristic_population(instance: RoutingInstance, size: int, rng: np.random.Generator) -> list[Solution]:
    """Baseline start: one nearest-neighbour tour plus random tours, all split."""
    pop = [split(nearest_neighbor_chromosome(instance), instance)]
    pop += random_population(instance, size - 1, rng)
    return pop


class _Population:
    def __init__(self, size: int, penalty: float):
        self.size = size
        self.penalty = penalty
        self.members: list[tuple[float, Solution]] = []

    def fitness(self, s: Solution) -> float:
        return s.penalized(self.penalty)

    def replace(self, candidates: list[Solution]) -> None:
        """Elitist truncation over parents + offspring, skipping duplicate costs."""
        pool = sorted(self.members + [(self.fitness(s), s) for s in candidates], key=lambda x: x[0])
        kept, dupes, seen = [], [], set()
        for f, s in pool:
            key = round(f, 6)
            (dupes if key in seen else kept).append((f, s))
            seen.add(key)
        self.members = (kept + dupes)[: self.size]

    def tournament(self, rng: np.random.Generator, k: int) -> Solution:
        idx = rng.integers(0, len(self.members), k)
        return self.members[int(idx.min())][1]  # members are sorted by fitness


def penalty_weight(instance) -> float:
    """Weight of one unit of capacity excess in the ranking fitness."""
    return 10.0 * instance.average_task_travel


def evolve(instance: RoutingInstance, init_population: list[Solution], params: EvolveParams,
           rng: np.random.Generator | None = None) -> tuple[Solution, ConvergenceTrace]:
    """Run the memetic EA until ``params.max_evaluations`` cost evaluations.

    Each offspring is produced by order crossover of two tournament-selected
    giant tours, split into routes and, with probability ``p_ls``, improved
    by local search. The population is replaced elitistically; offspring
    whose penalized cost duplicates a kept member are dropped first.

    Returns the best solution seen (feasible whenever any feasible one was
    evaluated) and the trace of ``(evaluations, best_cost)`` improvements.
    """
    if not init_population:
        raise ValueError("initial population is empty")
    rng = np.random.default_rng() if rng is None else rng
    penalty = penalty_weight(instance)
    trace = ConvergenceTrace()
    evals = 0
    best: Solution | None = None

    def consider(s: Solution) -> None:
        nonlocal best
        if best is None:
            best = s
        elif s.feasible and (not best.feasible or s.total_cost < best.total_cost - 1e-9):
            best = s
        elif not s.feasible and not best.feasible and s.penalized(penalty) < best.penalized(penalty):
            best = s
        else:
            return
        if best.feasible and (not trace.best_costs or best.total_cost < trace.best_costs[-1]):
            trace.record(evals, best.total_cost)

    pop = _Population(params.population_size, penalty)
    start = []
    for s in init_population:
        routing.cost_of(s, instance)
        evals += 1
        start.append(s)
        consider(s)
        if evals >= params.max_evaluations:
            break
    pop.replace(start)

    n = instance.n_tasks
    while evals < params.max_evaluations:
        offspring = []
        for _ in range(params.population_size):
            if evals >= params.max_evaluations:
                break
            p1 = pop.tournament(rng, params.tournament_size)
            p2 = pop.tournament(rng, params.tournament_size)
            a = b = 0
            if n > 1:
                a, b = int(rng.integers(n)), int(rng.integers(n - 1))
                b += b >= a
                a, b = min(a, b), max(a, b)
            ct, co = _kernels.order_crossover(p1.tour, p1.orient, p2.tour, p2.orient, a, b)
            child = split(Chromosome(ct, co), instance)
            evals += 1
            consider(child)
            if evals < params.max_evaluations and rng.random() < params.p_ls:
                child = local_search(child, instance, params.ls_max_moves, rng)
                evals += 1
                consider(child)
            offspring.append(child)
        pop.replace(offspring)
    trace.total_evaluations = evals
    return best, trace
