"""Instance sequences with a growing meme pool, run statistics and mode comparison."""
from __future__ import annotations

import csv
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from .features import featurize
from .instance import RoutingInstance, load_instance
from .meme import LearnParams, extract_constraints, learn_meme
from .routing import Solution, labels_of
from .solver import ConvergenceTrace, EvolveParams, default_params, evolve, penalty_weight
from .transfer import SocietyOfMemes, TransferParams, build_population

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

STATS_COLUMNS = ["instance", "mode", "b_cost", "ave_cost", "std_dev", "success_no", "evals", "cpu_s"]


class Mode(str, Enum):
    MEME = "meme"
    RANDOM = "random"
    HEURISTIC = "heuristic"


@dataclass
class ExperimentConfig:
    instance_paths: list
    mode: Mode = Mode.MEME
    runs_per_instance: int = 30
    # None picks the per-problem default budget
    max_evaluations: int | None = None
    pool_path: Path | None = None
    seed: int = 0
    output_dir: Path = Path("results")
    population_size: int = 30
    p_ls: float = 0.2
    jobs: int = 1
    feature_dim: int = 2
    success_thresholds: dict = field(default_factory=dict)
    # cpu_s is written as 0 when False, making stats.csv reproducible byte for byte
    record_cpu_time: bool = True

    def __post_init__(self):
        self.instance_paths = [Path(p) for p in self.instance_paths]
        self.mode = Mode(str(self.mode).lower()) if not isinstance(self.mode, Mode) else self.mode
        self.output_dir = Path(self.output_dir)
        if self.pool_path is not None:
            self.pool_path = Path(self.pool_path)
        if not self.instance_paths:
            raise ValueError("instance_paths must not be empty")
        if self.runs_per_instance < 1:
            raise ValueError("runs_per_instance must be at least 1")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")

    @classmethod
    def from_toml(cls, path, **overrides) -> ExperimentConfig:
        """Read a TOML config; relative paths resolve against the file's directory."""
        path = Path(path)
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        overrides = {k: v for k, v in overrides.items() if v is not None}
        base = path.parent

        def rel(p):
            p = Path(p)
            return p if p.is_absolute() else base / p

        data["instance_paths"] = [rel(p) for p in data.get("instance_paths", [])]
        for key in ("pool_path", "output_dir"):
            if data.get(key) is not None:
                data[key] = rel(data[key])
        data.update(overrides)
        return cls(**data)

    def evolve_params(self, instance: RoutingInstance) -> EvolveParams:
        over = {"population_size": self.population_size, "p_ls": self.p_ls}
        if self.max_evaluations is not None:
            over["max_evaluations"] = self.max_evaluations
        return default_params(instance, **over)


@dataclass
class RunResult:
    run: int
    best: Solution
    trace: ConvergenceTrace
    initial_best: float
    cpu_s: float
    initial_feasible: int = 0


@dataclass
class RunStatistics:
    instance: str
    mode: str
    best_cost: float
    ave_cost: float
    std_dev: float
    success_no: int
    evaluation_count: int
    cpu_time_seconds: float

    def row(self) -> list:
        return [self.instance, self.mode, repr(self.best_cost), repr(self.ave_cost), repr(self.std_dev),
                self.success_no, self.evaluation_count, f"{self.cpu_time_seconds:.3f}"]

    @classmethod
    def from_row(cls, d: dict) -> RunStatistics:
        return cls(d["instance"], d["mode"], float(d["b_cost"]), float(d["ave_cost"]), float(d["std_dev"]),
                   int(d["success_no"]), int(d["evals"]), float(d["cpu_s"]))


def run_rng(seed: int, instance_index: int, run: int) -> np.random.Generator:
    # same (seed, j, r) in every mode, so runs pair up across modes
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(instance_index), int(run)]))


def initial_best(population: list[Solution], penalty: float) -> float:
    """Fitness of the best-ranked initial individual; equals its cost when feasible."""
    return min(s.penalized(penalty) for s in population)


def single_run(instance: RoutingInstance, mode, memes, params: EvolveParams, seed: int, instance_index: int,
               run: int, transfer_params: TransferParams | None = None) -> RunResult:
    """One independent run: build the initial population for ``mode``, then evolve."""
    rng = run_rng(seed, instance_index, run)
    t0 = time.process_time()
    pop = build_population(instance, SocietyOfMemes(memes), params.population_size, transfer_params, rng,
                           mode=Mode(mode).value)
    init = initial_best(pop, penalty_weight(instance))
    best, trace = evolve(instance, pop, params, rng)
    return RunResult(run, best, trace, init, time.process_time() - t0, sum(s.feasible for s in pop))


def run_instance(instance: RoutingInstance, mode, memes, params: EvolveParams, seed: int, instance_index: int,
                 runs: int, jobs: int = 1, transfer_params: TransferParams | None = None) -> list[RunResult]:
    memes = list(memes)
    args = [(instance, mode, memes, params, seed, instance_index, r, transfer_params) for r in range(runs)]
    if jobs <= 1 or runs == 1:
        return [single_run(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(single_run, *zip(*args)))


def summarize(name: str, mode, results: list[RunResult], threshold: float | None, evaluations: int,
              record_cpu_time: bool = True) -> RunStatistics:
    costs = np.array([r.best.total_cost if r.best.feasible else np.inf for r in results])
    finite = costs[np.isfinite(costs)]
    if len(finite) == 0:
        b = ave = sd = float("inf")
    else:
        b, ave = float(finite.min()), float(finite.mean())
        sd = float(finite.std(ddof=1)) if len(finite) > 1 else 0.0
    thr = b if threshold is None else threshold
    success = int(np.sum(costs <= thr + 1e-9))
    cpu = float(sum(r.cpu_s for r in results)) if record_cpu_time else 0.0
    return RunStatistics(name, Mode(mode).value, b, ave, sd, success, int(evaluations), cpu)


def best_result(results: list[RunResult]) -> RunResult:
    """Lowest-cost run, feasible runs first, ties to the earliest run."""
    return min(results, key=lambda r: (not r.best.feasible, r.best.penalized(0.0), r.run))


def learn_from(instance: RoutingInstance, solution: Solution, p: int = 2, params: LearnParams | None = None):
    X = featurize(instance, p)
    return learn_meme(X, labels_of(solution), extract_constraints(solution), params,
                      source_name=instance.name, capacity=instance.capacity)


def write_stats(path, stats: list[RunStatistics]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STATS_COLUMNS)
        for s in stats:
            w.writerow(s.row())


def read_stats(path) -> list[RunStatistics]:
    path = Path(path)
    if path.is_dir():
        path = path / "stats.csv"
    with open(path, newline="") as fh:
        return [RunStatistics.from_row(d) for d in csv.DictReader(fh)]


def run_sequence(config: ExperimentConfig, thresholds: dict | None = None) -> list[RunStatistics]:
    """Solve the configured instances in order, growing the meme pool in MEME mode.

    ``thresholds`` maps instance names to Success No. thresholds and takes
    precedence over the config; instances without one use their known lower
    bound, else the best cost of this mode.
    """
    instances = [load_instance(p) for p in config.instance_paths]  # fail before doing any work
    som = SocietyOfMemes.load(config.pool_path) if config.pool_path else SocietyOfMemes()
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    thr = {**config.success_thresholds, **(thresholds or {})}
    tp = TransferParams(p=config.feature_dim)
    stats = []
    for j, inst in enumerate(instances):
        params = config.evolve_params(inst)
        memes = list(som) if config.mode is Mode.MEME else []
        results = run_instance(inst, config.mode, memes, params, config.seed, j, config.runs_per_instance,
                               config.jobs, tp)
        for r in results:
            r.trace.to_csv(out / f"trace_{inst.name}_{r.run}.csv")
        stats.append(summarize(inst.name, config.mode, results, thr.get(inst.name, inst.lower_bound),
                               params.max_evaluations, config.record_cpu_time))
        write_stats(out / "stats.csv", stats)
        if config.mode is Mode.MEME and inst.n_tasks >= 2:
            som.append(learn_from(inst, best_result(results).best, config.feature_dim))
    return stats


@dataclass
class Comparison:
    mode_a: str
    mode_b: str
    instances: list
    d_ave_cost: list
    d_best_cost: list
    d_success_no: list
    p_value: float

    def format(self) -> str:
        lines = [f"comparison: {self.mode_a} (a) vs {self.mode_b} (b); deltas are b - a",
                 f"{'instance':<20}{'d_ave_cost':>14}{'d_b_cost':>14}{'d_success_no':>14}"]
        for name, da, db, ds in zip(self.instances, self.d_ave_cost, self.d_best_cost, self.d_success_no):
            lines.append(f"{name:<20}{da:>14.3f}{db:>14.3f}{ds:>14d}")
        lines.append(f"sign test (b has lower ave_cost), one-sided p = {self.p_value:.6g}")
        return "\n".join(lines)


def sign_test(a, b) -> float:
    """One-sided paired sign test that ``b`` tends to be smaller than ``a``; ties dropped."""
    d = np.asarray(b, dtype=np.float64) - np.asarray(a, dtype=np.float64)
    n = int(np.sum(d != 0))
    if n == 0:
        return 1.0
    return float(binomtest(int(np.sum(d < 0)), n, 0.5, alternative="greater").pvalue)


def compare_modes(stats_a: list[RunStatistics], stats_b: list[RunStatistics]) -> Comparison:
    names_a = [s.instance for s in stats_a]
    names_b = [s.instance for s in stats_b]
    if names_a != names_b:
        raise ValueError(f"instance lists differ: {names_a} vs {names_b}")
    mode_a = ",".join(sorted({s.mode for s in stats_a})) or "?"
    mode_b = ",".join(sorted({s.mode for s in stats_b})) or "?"
    d_ave = [b.ave_cost - a.ave_cost for a, b in zip(stats_a, stats_b)]
    d_best = [b.best_cost - a.best_cost for a, b in zip(stats_a, stats_b)]
    d_succ = [b.success_no - a.success_no for a, b in zip(stats_a, stats_b)]
    p = sign_test([s.ave_cost for s in stats_a], [s.ave_cost for s in stats_b])
    return Comparison(mode_a, mode_b, names_a, d_ave, d_best, d_succ, p)
