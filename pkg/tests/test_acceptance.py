"""Acceptance criteria 1 to 7; each prints one PASS/FAIL line."""
import numpy as np
import pytest

from conftest import clustered_instance, floyd_warshall, random_carp, random_cvrp, random_graph
from memevo.experiment import Mode, best_result, learn_from, run_instance
from memevo.features import featurize
from memevo.instance import find_instance, load_instance, shortest_paths
from memevo.meme import (ConstraintTriple, LearnParams, constraint_margin, factorize, hsic_score, learn_meme,
                         objective, objective_gradient)
from memevo.routing import Chromosome, from_routes, labels_of, split
from memevo.solver import EvolveParams, default_params
from memevo.synthetic import band_family
from memevo.transfer import SocietyOfMemes, imitate, pds_order, solve_selection_qp
from test_meme import labels, naive_hsic, random_psd, toy_routes
from test_routing import brute_force_split
from test_transfer import grid_refine, qp_cases

RESULTS = {}


def verdict(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    RESULTS[n] = line
    print(line)
    assert ok, line


def best_of(inst, runs, evaluations):
    params = default_params(inst, max_evaluations=evaluations)
    results = run_instance(inst, Mode.HEURISTIC, [], params, seed=0, instance_index=0, runs=runs)
    return min(r.best.total_cost for r in results if r.best.feasible)


@pytest.mark.slow
def test_criterion_1_solver_sanity():
    parts, ok = [], True
    for name, lb in [("A-n32-k5", 784), ("E-n33-k4", 835)]:
        path = find_instance(name)
        if path is None:
            parts.append(f"{name}: benchmark file not found")
            ok = False
            continue
        best = best_of(load_instance(path), 10, 100_000)
        good = best <= 1.02 * lb
        ok &= good
        parts.append(f"{name}: best {best:g} vs limit {1.02 * lb:g}")
    verdict(1, ok, "; ".join(parts))


@pytest.mark.slow
def test_criterion_2_transfer_effect():
    seeds, budget = 20, 20_000
    family = band_family(6, seed=0)
    som = SocietyOfMemes()
    params = EvolveParams(max_evaluations=budget)
    init_wins, speed_wins, parts, no_feasible = 0, 0, [], 0
    for j, inst in enumerate(family):
        meme_runs = run_instance(inst, Mode.MEME, list(som), params, 0, j, seeds)
        if j > 0:
            rand_runs = run_instance(inst, Mode.RANDOM, [], params, 0, j, seeds)
            init_m = np.mean([r.initial_best for r in meme_runs])
            init_r = np.mean([r.initial_best for r in rand_runs])
            reach = []
            for m, r in zip(meme_runs, rand_runs):
                e = m.trace.evaluations_to_reach(r.best.total_cost)
                reach.append(budget if e is None else e)
            no_feasible += sum(r.initial_feasible == 0 for r in meme_runs)
            init_wins += init_m < init_r
            speed_wins += np.mean(reach) <= 0.75 * budget
            parts.append(f"{inst.name}: init {init_m:.0f}/{init_r:.0f}, reach {np.mean(reach):.0f}")
        som.append(learn_from(inst, best_result(meme_runs).best))
    ok = init_wins == 5 and speed_wins >= 4
    verdict(2, ok, f"init better on {init_wins}/5, reach <= 15000 on {speed_wins}/5, "
                   f"{no_feasible} meme runs started with no feasible individual; " + "; ".join(parts))


def test_criterion_3_dormant_selection():
    inst = band_family(1, seed=3)[0]
    params = EvolveParams(max_evaluations=2000)
    same = 0
    meme_runs = run_instance(inst, Mode.MEME, [], params, 7, 0, 5)
    heuristic_runs = run_instance(inst, Mode.HEURISTIC, [], params, 7, 0, 5)
    for m, h in zip(meme_runs, heuristic_runs):
        same += (m.trace.evaluations == h.trace.evaluations and m.trace.best_costs == h.trace.best_costs
                 and np.array_equal(m.best.tour, h.best.tour))
    verdict(3, same == 5, f"{same}/5 paired runs bitwise identical")


def test_criterion_4_meme_core_properties():
    rng = np.random.default_rng(2024)
    fails = []

    invariant_ok = 0
    for _ in range(200):
        p, n = int(rng.integers(1, 4)), int(rng.integers(3, 12))
        X = rng.normal(scale=rng.uniform(0.1, 50), size=(p, n))
        triples = [ConstraintTriple(*rng.choice(n, 3, replace=False)) for _ in range(rng.integers(0, 6))]
        M = learn_meme(X, labels(rng.integers(0, 3, n)), triples, LearnParams(max_iterations=60)).matrix
        invariant_ok += (np.allclose(M, M.T, atol=1e-9) and np.linalg.eigvalsh(M).min() >= -1e-9
                         and abs(np.trace(M) - p) <= 1e-6)
    if invariant_ok < 200:
        fails.append(f"invariants {invariant_ok}/200")

    grad_ok, checked = 0, 0
    while checked < 50:
        n = int(rng.integers(4, 9))
        X, Y = rng.normal(size=(3, n)), labels(rng.integers(0, 2, n))
        triples = [ConstraintTriple(*rng.choice(n, 3, replace=False)) for _ in range(6)]
        M = random_psd(rng, 3, trace=3.0)
        if min(abs(constraint_margin(X, M, t)) for t in triples) < 1e-3:
            continue
        checked += 1
        G, F, h = objective_gradient(X, Y, triples, M), np.zeros((3, 3)), 1e-6
        for a in range(3):
            for b in range(3):
                E = np.zeros((3, 3))
                E[a, b] = h
                F[a, b] = (objective(X, Y, triples, M + E) - objective(X, Y, triples, M - E)) / (2 * h)
        grad_ok += bool(np.all(np.abs(G - F) <= 1e-4 * np.maximum(np.abs(F), 1.0)))
    if grad_ok < 50:
        fails.append(f"gradient {grad_ok}/50")

    lin_ok = 0
    for _ in range(100):
        X, Y = rng.normal(size=(3, 7)), labels(rng.integers(0, 3, 7))
        M1, M2 = random_psd(rng, 3), random_psd(rng, 3)
        a, b = rng.uniform(-2, 2, 2)
        lhs = hsic_score(X, a * M1 + b * M2, Y)
        lin_ok += abs(lhs - a * hsic_score(X, M1, Y) - b * hsic_score(X, M2, Y)) < 1e-9
    if lin_ok < 100:
        fails.append(f"linearity {lin_ok}/100")

    loop_ok = 0
    for _ in range(100):
        p = int(rng.integers(1, 4))
        X, M, Y = rng.normal(size=(p, 5)), random_psd(rng, p), labels(rng.integers(0, 3, 5))
        loop_ok += abs(hsic_score(X, M, Y) - naive_hsic(X, M, Y)) <= 1e-9 * max(1.0, abs(naive_hsic(X, M, Y)))
    if loop_ok < 100:
        fails.append(f"naive loop {loop_ok}/100")

    count_ok = 0
    for X, cons in toy_routes(50):
        meme = learn_meme(X, np.ones((3, 3)), cons)
        count_ok += (sum(constraint_margin(X, meme, c) > 0 for c in cons)
                     >= sum(constraint_margin(X, np.eye(2), c) > 0 for c in cons))
    if count_ok < 50:
        fails.append(f"constraint count {count_ok}/50")

    verdict(4, not fails, "; ".join(fails) or
            "200 invariants, 50 gradients, 100 linearity, 100 naive-loop, 50 toy routes")


def test_criterion_5_oracle_equivalences():
    rng = np.random.default_rng(99)
    fails = []

    split_ok = 0
    for case in range(1000):
        n = int(rng.integers(1, 11))
        carp = case % 2 == 1
        inst = random_carp(rng, 10, n) if carp else random_cvrp(rng, n)
        n = inst.n_tasks
        tour = rng.permutation(n)
        orient = rng.integers(0, 2, n) if carp else np.zeros(n, int)
        sol = split(Chromosome(tour, orient), inst)
        split_ok += abs(sol.total_cost - brute_force_split(inst, tour, orient)) < 1e-6
    if split_ok < 1000:
        fails.append(f"split {split_ok}/1000")

    qp_ok = sum(abs(solve_selection_qp(h, s)[0] - grid_refine(h, s)) <= 1e-3 for h, s in qp_cases(100, seed=5))
    if qp_ok < 100:
        fails.append(f"qp {qp_ok}/100")

    sp_ok = 0
    for _ in range(100):
        n = int(rng.integers(2, 40))
        edges = random_graph(rng, n)
        sp_ok += np.allclose(shortest_paths(n, edges), floyd_warshall(n, edges), atol=1e-9)
    if sp_ok < 100:
        fails.append(f"shortest paths {sp_ok}/100")

    fac_ok = 0
    for _ in range(200):
        M = random_psd(rng, int(rng.integers(1, 6)))
        L = factorize(M)
        fac_ok += np.linalg.norm(L @ L.T - M) < 1e-8
    if fac_ok < 200:
        fails.append(f"factorize {fac_ok}/200")

    verdict(5, not fails, "; ".join(fails) or "split 1000, qp 100, shortest paths 100, factorize 200")


def test_criterion_6_imitation_geometry():
    inst, routes, _ = clustered_instance()
    target = labels_of(from_routes(routes, inst))
    X = featurize(inst)
    hits = sum(np.array_equal(labels_of(imitate(inst, X, seed)), target) for seed in range(20))
    collinear = pds_order(np.array([[0.0, 1.0, 2.0, 3.0]]), [0, 1, 2, 3]) == [0, 1, 2, 3]
    verdict(6, hits >= 18 and collinear, f"optimal labels for {hits}/20 seeds, collinear order {collinear}")


GOLDEN = {
    "Augerat": {"A-n32-k5": (31, 100, 784), "A-n54-k7": (53, 100, 1167), "A-n60-k9": (59, 100, 1354),
                "A-n69-k9": (68, 100, 1159), "A-n80-k10": (79, 100, 1763), "B-n41-k6": (40, 100, 829),
                "B-n57-k7": (56, 100, 1140), "B-n63-k10": (62, 100, 1496), "B-n68-k9": (67, 100, 1272),
                "B-n78-k10": (77, 100, 1221), "P-n50-k7": (49, 150, 554), "P-n76-k5": (75, 280, 627)},
    "CE": {"E-n33-k4": (32, 8000, 835), "E-n76-k7": (75, 220, 682), "E-n76-k8": (75, 180, 735),
           "E-n76-k10": (75, 140, 830), "E-n76-k14": (75, 100, 1021), "E-n101-k8": (100, 200, 815)},
    # |V|, required edges, total edges, lower bound
    "egl-E": {"E1-A": (77, 51, 98, 3548), "E1-B": (77, 51, 98, 4498), "E1-C": (77, 51, 98, 5566),
              "E2-A": (77, 72, 98, 5018), "E2-B": (77, 72, 98, 6305), "E2-C": (77, 72, 98, 8243),
              "E3-A": (77, 87, 98, 5898), "E3-B": (77, 87, 98, 7704), "E3-C": (77, 87, 98, 10163),
              "E4-A": (77, 98, 98, 6048), "E4-B": (77, 98, 98, 8884), "E4-C": (77, 98, 98, 11427)},
    "egl-S": {"S1-A": (140, 75, 190, 5018), "S1-B": (140, 75, 190, 6384), "S1-C": (140, 75, 190, 8493),
              "S2-A": (140, 147, 190, 9824), "S2-B": (140, 147, 190, 12968), "S2-C": (140, 147, 190, 16353),
              "S3-A": (140, 159, 190, 10143), "S3-B": (140, 159, 190, 13616), "S3-C": (140, 159, 190, 17100),
              "S4-A": (140, 190, 190, 12143), "S4-B": (140, 190, 190, 16093), "S4-C": (140, 190, 190, 20375)},
}


def locate(name):
    # egl files circulate as e.g. "egl-e1-A.dat" as well as "E1-A"
    short = name.replace("-", "")
    aliases = [name, short, "egl-" + name, "egl-" + short, f"egl-{name[:2].lower()}-{name[-1]}"]
    for alias in aliases:
        p = find_instance(alias)
        if p is not None:
            return p
    return None


def matches(family, inst, expected):
    if family in ("Augerat", "CE"):
        v, cap, lb = expected
        return inst.n_tasks == v and inst.capacity == cap and inst.lower_bound == lb
    v, er, e, lb = expected
    return (inst.n_vertices == v and inst.n_tasks == er and len(inst.edges) == e
            and (inst.lower_bound is None or inst.lower_bound == lb))


def test_criterion_7_parser_golden_files():
    summary, ok = [], True
    for family, table in GOLDEN.items():
        found = matched = 0
        for name, expected in table.items():
            path = locate(name)
            if path is None:
                continue
            found += 1
            matched += matches(family, load_instance(path), expected)
        ok &= matched >= 4 and matched == found
        summary.append(f"{family} {matched}/{found} files match")
    verdict(7, ok, "; ".join(summary) + " (need 4 per family)")
