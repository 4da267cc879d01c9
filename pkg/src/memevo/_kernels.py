"""Compiled inner loops for split, crossover and local search.

Tasks are (head, tail) vertex pairs; a CVRP customer has head == tail and zero
service cost. Orientation 0 serves head -> tail, 1 serves tail -> head. A
solution is held flat: ``tour`` (task ids), ``orient`` and ``bounds`` where
route r is ``tour[bounds[r]:bounds[r + 1]]``.
"""
import numpy as np
from numba import njit

EPS = 1e-9


@njit(cache=True)
def _in(t, o, heads, tails):
    return tails[t] if o else heads[t]


@njit(cache=True)
def _out(t, o, heads, tails):
    return heads[t] if o else tails[t]


@njit(cache=True)
def route_cost(tour, orient, lo, hi, heads, tails, service, dist, depot):
    c = 0.0
    prev = depot
    for k in range(lo, hi):
        t = tour[k]
        o = orient[k]
        c += dist[prev, _in(t, o, heads, tails)] + service[t]
        prev = _out(t, o, heads, tails)
    return c + dist[prev, depot]


@njit(cache=True)
def flat_cost(tour, orient, bounds, heads, tails, service, dist, depot):
    total = 0.0
    for r in range(len(bounds) - 1):
        total += route_cost(tour, orient, bounds[r], bounds[r + 1], heads, tails, service, dist, depot)
    return total


@njit(cache=True)
def split(tour, orient, heads, tails, service, demand, dist, depot, capacity):
    """Optimal partition of a giant tour into capacity-feasible routes.

    Shortest path on the auxiliary DAG whose arc (i, j) is the route serving
    tour[i:j]. Returns route bounds, or an empty array if no feasible split
    exists.
    """
    n = len(tour)
    V = np.full(n + 1, np.inf)
    P = np.full(n + 1, -1, dtype=np.int64)
    V[0] = 0.0
    for i in range(n):
        if V[i] == np.inf:
            continue
        load = 0.0
        cost = 0.0
        first_in = _in(tour[i], orient[i], heads, tails)
        prev_out = -1
        for j in range(i, n):
            t = tour[j]
            o = orient[j]
            load += demand[t]
            if load > capacity + EPS:
                break
            if j == i:
                cost = service[t]
            else:
                cost += dist[prev_out, _in(t, o, heads, tails)] + service[t]
            prev_out = _out(t, o, heads, tails)
            total = V[i] + dist[depot, first_in] + cost + dist[prev_out, depot]
            if total < V[j + 1] - EPS:
                V[j + 1] = total
                P[j + 1] = i
    if V[n] == np.inf:
        return np.empty(0, dtype=np.int64)
    cuts = [n]
    j = n
    while j > 0:
        j = P[j]
        cuts.append(j)
    out = np.empty(len(cuts), dtype=np.int64)
    for k in range(len(cuts)):
        out[k] = cuts[len(cuts) - 1 - k]
    return out


@njit(cache=True)
def order_crossover(p1, o1, p2, o2, a, b):
    """OX: keep p1[a:b+1] in place, fill the rest in p2's order from b+1."""
    n = len(p1)
    child = np.full(n, -1, dtype=np.int64)
    corient = np.zeros(n, dtype=np.int8)
    used = np.zeros(n, dtype=np.bool_)
    for k in range(a, b + 1):
        child[k] = p1[k]
        corient[k] = o1[k]
        used[p1[k]] = True
    pos = (b + 1) % n
    for s in range(n):
        k = (b + 1 + s) % n
        t = p2[k]
        if not used[t]:
            child[pos] = t
            corient[pos] = o2[k]
            used[t] = True
            pos = (pos + 1) % n
    return child, corient


# ---------------------------------------------------------------------------
# local search on a route matrix: R[r, :L[r]] task ids, O[r, :L[r]] orientations.
# VI / VO cache entry and exit vertices with a depot sentinel on both sides:
# position k of route r is column k + 1, columns 0 and L[r] + 1 hold the depot.
# rof / pof give each task's route and position.


@njit(cache=True)
def _best_insert(t, a, b, heads, tails, dist, carp):
    # cost of placing t between vertices a and b, and the orientation used
    c0 = dist[a, heads[t]] + dist[tails[t], b]
    if not carp:
        return c0, 0
    c1 = dist[a, tails[t]] + dist[heads[t], b]
    if c1 < c0:
        return c1, 1
    return c0, 0


@njit(cache=True)
def _refresh(R, O, L, VI, VO, rof, pof, load, r, heads, tails, demand, depot):
    s = 0.0
    VI[r, 0] = depot
    VO[r, 0] = depot
    for k in range(L[r]):
        t = R[r, k]
        o = O[r, k]
        VI[r, k + 1] = tails[t] if o else heads[t]
        VO[r, k + 1] = heads[t] if o else tails[t]
        rof[t] = r
        pof[t] = k
        s += demand[t]
    VI[r, L[r] + 1] = depot
    VO[r, L[r] + 1] = depot
    load[r] = s


@njit(cache=True)
def _remove_at(R, O, L, r, i):
    for k in range(i, L[r] - 1):
        R[r, k] = R[r, k + 1]
        O[r, k] = O[r, k + 1]
    L[r] -= 1


@njit(cache=True)
def _insert_at(R, O, L, r, i, t, o):
    for k in range(L[r], i, -1):
        R[r, k] = R[r, k - 1]
        O[r, k] = O[r, k - 1]
    R[r, i] = t
    O[r, i] = o
    L[r] += 1


@njit(cache=True)
def _try_relocate(S, heads, tails, demand, dist, depot, capacity, carp, order):
    R, O, L, VI, VO, rof, pof, load = S
    nr = len(L)
    applied = 0
    for t in order:
        r1 = rof[t]
        i1 = pof[t]
        a = VO[r1, i1]
        b = VI[r1, i1 + 2]
        ti = VI[r1, i1 + 1]
        to = VO[r1, i1 + 1]
        here = dist[a, ti] + dist[to, b]
        gain = here - dist[a, b]
        if carp:
            c, o = _best_insert(t, a, b, heads, tails, dist, carp)
            if c < here - EPS:
                O[r1, i1] = o
                _refresh(R, O, L, VI, VO, rof, pof, load, r1, heads, tails, demand, depot)
                applied += 1
                continue
        moved = False
        for r2 in range(nr):
            if r2 != r1 and load[r2] + demand[t] > capacity + EPS:
                continue
            for j in range(L[r2] + 1):
                if r2 == r1 and (j == i1 or j == i1 + 1):
                    continue
                x = VO[r2, j]
                y = VI[r2, j + 1]
                c, o = _best_insert(t, x, y, heads, tails, dist, carp)
                if c - dist[x, y] - gain < -EPS:
                    _remove_at(R, O, L, r1, i1)
                    jj = j
                    if r2 == r1 and j > i1:
                        jj = j - 1
                    _insert_at(R, O, L, r2, jj, t, o)
                    _refresh(R, O, L, VI, VO, rof, pof, load, r1, heads, tails, demand, depot)
                    if r2 != r1:
                        _refresh(R, O, L, VI, VO, rof, pof, load, r2, heads, tails, demand, depot)
                    applied += 1
                    moved = True
                    break
            if moved:
                break
    return applied


@njit(cache=True)
def _swap_from(S, heads, tails, demand, dist, depot, capacity, carp, r1, i):
    R, O, L, VI, VO, rof, pof, load = S
    nr = len(L)
    u = R[r1, i]
    a1 = VO[r1, i]
    b1 = VI[r1, i + 2]
    old_u = dist[a1, VI[r1, i + 1]] + dist[VO[r1, i + 1], b1]
    for r2 in range(r1, nr):
        start = i + 2 if r2 == r1 else 0
        for j in range(start, L[r2]):
            v = R[r2, j]
            if r2 != r1:
                if load[r1] - demand[u] + demand[v] > capacity + EPS:
                    continue
                if load[r2] - demand[v] + demand[u] > capacity + EPS:
                    continue
            a2 = VO[r2, j]
            b2 = VI[r2, j + 2]
            old_v = dist[a2, VI[r2, j + 1]] + dist[VO[r2, j + 1], b2]
            cv, ov = _best_insert(v, a1, b1, heads, tails, dist, carp)
            cu, ou = _best_insert(u, a2, b2, heads, tails, dist, carp)
            if cu + cv - old_u - old_v < -EPS:
                R[r1, i] = v
                O[r1, i] = ov
                R[r2, j] = u
                O[r2, j] = ou
                _refresh(R, O, L, VI, VO, rof, pof, load, r1, heads, tails, demand, depot)
                if r2 != r1:
                    _refresh(R, O, L, VI, VO, rof, pof, load, r2, heads, tails, demand, depot)
                return True
    return False


@njit(cache=True)
def _try_swap(S, heads, tails, demand, dist, depot, capacity, carp):
    L = S[2]
    applied = 0
    for r1 in range(len(L)):
        i = 0
        while i < L[r1]:
            if _swap_from(S, heads, tails, demand, dist, depot, capacity, carp, r1, i):
                applied += 1
            else:
                i += 1
    return applied


@njit(cache=True)
def _reverse(R, O, r, i, j):
    while i < j:
        t = R[r, i]
        R[r, i] = R[r, j]
        R[r, j] = t
        o = O[r, i]
        O[r, i] = 1 - O[r, j]
        O[r, j] = 1 - o
        i += 1
        j -= 1
    if i == j:
        O[r, i] = 1 - O[r, i]


@njit(cache=True)
def _two_opt_route(S, heads, tails, demand, dist, depot, carp, r):
    R, O, L, VI, VO, rof, pof, load = S
    for i in range(L[r]):
        a = VO[r, i]
        ai = VI[r, i + 1]
        for j in range(i if carp else i + 1, L[r]):
            b = VI[r, j + 2]
            bj = VO[r, j + 1]
            # reversing flips each task, so the segment enters at bj and leaves at ai
            if dist[a, bj] + dist[ai, b] - dist[a, ai] - dist[bj, b] < -EPS:
                _reverse(R, O, r, i, j)
                _refresh(R, O, L, VI, VO, rof, pof, load, r, heads, tails, demand, depot)
                return True
    return False


@njit(cache=True)
def _try_two_opt(S, heads, tails, demand, dist, depot, carp):
    L = S[2]
    applied = 0
    for r in range(len(L)):
        while _two_opt_route(S, heads, tails, demand, dist, depot, carp, r):
            applied += 1
    return applied


@njit(cache=True)
def _swap_tails(R, O, L, r1, i, r2, j, scratch, sorient):
    # r1 <- r1[:i+1] + r2[j+1:], r2 <- r2[:j+1] + r1[i+1:]
    n1 = 0
    for k in range(i + 1, L[r1]):
        scratch[n1] = R[r1, k]
        sorient[n1] = O[r1, k]
        n1 += 1
    m = i + 1
    for k in range(j + 1, L[r2]):
        R[r1, m] = R[r2, k]
        O[r1, m] = O[r2, k]
        m += 1
    L1 = m
    m = j + 1
    for k in range(n1):
        R[r2, m] = scratch[k]
        O[r2, m] = sorient[k]
        m += 1
    L[r2] = m
    L[r1] = L1


@njit(cache=True)
def _cross_reverse(R, O, L, r1, i, r2, j, scratch, sorient):
    # r1 <- r1[:i+1] + rev(r2[:j+1]), r2 <- rev(r1[i+1:]) + r2[j+1:]
    n1 = 0
    for k in range(L[r1] - 1, i, -1):
        scratch[n1] = R[r1, k]
        sorient[n1] = 1 - O[r1, k]
        n1 += 1
    tail2 = L[r2] - (j + 1)
    head_len = j + 1
    m = i + 1
    for k in range(j, -1, -1):
        R[r1, m] = R[r2, k]
        O[r1, m] = 1 - O[r2, k]
        m += 1
    L[r1] = m
    # shift r2's tail to make room for the reversed head
    if n1 > head_len:
        for k in range(tail2 - 1, -1, -1):
            R[r2, n1 + k] = R[r2, head_len + k]
            O[r2, n1 + k] = O[r2, head_len + k]
    elif n1 < head_len:
        for k in range(tail2):
            R[r2, n1 + k] = R[r2, head_len + k]
            O[r2, n1 + k] = O[r2, head_len + k]
    for k in range(n1):
        R[r2, k] = scratch[k]
        O[r2, k] = sorient[k]
    L[r2] = n1 + tail2


@njit(cache=True)
def _try_two_opt_star(S, heads, tails, demand, dist, depot, capacity, scratch, sorient):
    R, O, L, VI, VO, rof, pof, load = S
    nr = len(L)
    applied = 0
    for r1 in range(nr):
        r2 = r1 + 1
        while r2 < nr:
            moved = False
            pre1 = 0.0
            for i in range(-1, L[r1]):
                if i >= 0:
                    pre1 += demand[R[r1, i]]
                a = VO[r1, i + 1]
                an = VI[r1, i + 2]
                pre2 = 0.0
                for j in range(-1, L[r2]):
                    if j >= 0:
                        pre2 += demand[R[r2, j]]
                    b = VO[r2, j + 1]
                    bn = VI[r2, j + 2]
                    base = dist[a, an] + dist[b, bn]
                    # tail exchange: A1 + B2 | B1 + A2
                    if (pre1 + load[r2] - pre2 <= capacity + EPS and pre2 + load[r1] - pre1 <= capacity + EPS
                            and dist[a, bn] + dist[b, an] - base < -EPS):
                        _swap_tails(R, O, L, r1, i, r2, j, scratch, sorient)
                        moved = True
                    # cross reversal: A1 + rev(B1) | rev(A2) + B2
                    elif (pre1 + pre2 <= capacity + EPS and load[r1] - pre1 + load[r2] - pre2 <= capacity + EPS
                            and dist[a, b] + dist[an, bn] - base < -EPS):
                        _cross_reverse(R, O, L, r1, i, r2, j, scratch, sorient)
                        moved = True
                    if moved:
                        break
                if moved:
                    break
            if moved:
                _refresh(R, O, L, VI, VO, rof, pof, load, r1, heads, tails, demand, depot)
                _refresh(R, O, L, VI, VO, rof, pof, load, r2, heads, tails, demand, depot)
                applied += 1
            else:
                r2 += 1
    return applied


@njit(cache=True)
def local_search(tour, orient, bounds, heads, tails, demand, dist, depot, capacity, carp, order, max_moves):
    """First-improvement descent over relocate, swap, 2-opt and 2-opt*.

    Returns the improved flat solution and the number of moves applied.
    """
    n = len(tour)
    nr = len(bounds) - 1
    R = np.zeros((nr, n), dtype=np.int64)
    O = np.zeros((nr, n), dtype=np.int8)
    L = np.zeros(nr, dtype=np.int64)
    VI = np.zeros((nr, n + 2), dtype=np.int64)
    VO = np.zeros((nr, n + 2), dtype=np.int64)
    rof = np.zeros(len(demand), dtype=np.int64)
    pof = np.zeros(len(demand), dtype=np.int64)
    load = np.zeros(nr)
    for r in range(nr):
        for k in range(bounds[r], bounds[r + 1]):
            R[r, k - bounds[r]] = tour[k]
            O[r, k - bounds[r]] = orient[k]
        L[r] = bounds[r + 1] - bounds[r]
        _refresh(R, O, L, VI, VO, rof, pof, load, r, heads, tails, demand, depot)
    S = (R, O, L, VI, VO, rof, pof, load)
    scratch = np.zeros(n, dtype=np.int64)
    sorient = np.zeros(n, dtype=np.int8)
    moves = 0
    while moves < max_moves:
        applied = _try_relocate(S, heads, tails, demand, dist, depot, capacity, carp, order)
        applied += _try_swap(S, heads, tails, demand, dist, depot, capacity, carp)
        applied += _try_two_opt(S, heads, tails, demand, dist, depot, carp)
        applied += _try_two_opt_star(S, heads, tails, demand, dist, depot, capacity, scratch, sorient)
        moves += applied
        if applied == 0:
            break
    out_t = np.empty(n, dtype=np.int64)
    out_o = np.empty(n, dtype=np.int8)
    nb = 1
    for r in range(nr):
        if L[r] > 0:
            nb += 1
    out_b = np.zeros(nb, dtype=np.int64)
    m = 0
    b = 0
    for r in range(nr):
        if L[r] == 0:
            continue
        for k in range(L[r]):
            out_t[m] = R[r, k]
            out_o[m] = O[r, k]
            m += 1
        b += 1
        out_b[b] = m
    return out_t, out_o, out_b, moves
