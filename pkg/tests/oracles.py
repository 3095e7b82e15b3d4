"""Independent reference implementations used only by the tests."""

import heapq
import itertools
from collections import defaultdict

import numpy as np


def dijkstra_times(graph, source, speed):
    """Textbook heap Dijkstra over the arc list, in minutes."""
    adj = defaultdict(list)
    for u, v, d in zip(graph.tails.tolist(), graph.heads.tolist(), graph.lengths.tolist()):
        adj[u].append((v, d / speed))
    dist = {source: 0.0}
    heap = [(0.0, source)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, w in adj[u]:
            nd = d + w
            if nd < dist.get(v, np.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return np.array([dist.get(i, np.inf) for i in range(graph.n_nodes)])


def reachable(graph, source, reverse=False):
    adj = defaultdict(list)
    for u, v in zip(graph.tails.tolist(), graph.heads.tolist()):
        if reverse:
            u, v = v, u
        adj[u].append(v)
    seen = {source}
    stack = [source]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def lp_max(c, A_ub, b_ub, bounds):
    """HiGHS LP maximum of c.x."""
    from scipy.optimize import linprog

    res = linprog(-np.asarray(c, float), A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    assert res.status == 0, res.message
    return -res.fun


def knapsack_lp(capacity, costs):
    costs = np.asarray(costs, float)
    if costs.size == 0:
        return 0.0
    return lp_max(np.ones(costs.size), costs[None, :], [capacity], [(0, 1)] * costs.size)


def mka_matrices(capacities, costs):
    """Constraint rows of the multiple knapsack LP; variables (vehicle, item)
    in row-major order, infinite costs fixed at zero."""
    costs = np.asarray(costs, float)
    m, n = costs.shape
    rows, rhs = [], []
    for k in range(m):
        row = np.zeros(m * n)
        row[k * n:(k + 1) * n] = np.where(np.isfinite(costs[k]), costs[k], 0.0)
        rows.append(row)
        rhs.append(capacities[k])
    for j in range(n):
        row = np.zeros(m * n)
        row[j::n] = 1.0
        rows.append(row)
        rhs.append(1.0)
    bounds = [(0, 0) if not np.isfinite(costs[k, j]) else (0, 1) for k in range(m) for j in range(n)]
    return np.array(rows), np.array(rhs), bounds


def mka_ilp(capacities, costs):
    """Integer optimum by enumerating assignments (item -> vehicle or none)."""
    costs = np.asarray(costs, float)
    m, n = costs.shape
    best = 0
    for assign in itertools.product(range(m + 1), repeat=n):
        used = np.zeros(m)
        ok = True
        count = 0
        for j, k in enumerate(assign):
            if k == m:
                continue
            if not np.isfinite(costs[k, j]):
                ok = False
                break
            used[k] += costs[k, j]
            count += 1
        if ok and np.all(used <= np.asarray(capacities) + 1e-12):
            best = max(best, count)
    return best


def open_path_brute_force(cost):
    """Cheapest path from node 0 through all of 1..n-2 ending at n-1."""
    n = cost.shape[0]
    mids = list(range(1, n - 1))
    best = np.inf
    for perm in itertools.permutations(mids):
        seq = (0,) + perm + (n - 1,)
        best = min(best, sum(cost[a, b] for a, b in zip(seq[:-1], seq[1:])))
    return best


def enumerate_routes(requests, times, horizon):
    """Every elementary route (ordered subset of requests) whose out-and-back
    duration fits the horizon; ``times`` is a function t(a, b) on nodes and
    the depot is node ``depot``. Returns (sequence, duration) pairs."""
    out = []
    n = len(requests)

    def extend(seq, last_node, dur):
        back = dur + times(last_node, None)
        if seq:
            out.append((tuple(seq), back))
        for j in range(n):
            if j in seq:
                continue
            q = requests[j]
            nd = dur + times(last_node, q.node) + q.duration
            if nd + times(q.node, None) <= horizon + 1e-9:
                extend(seq + [j], q.node, nd)

    extend([], None, 0.0)
    return out


def set_partition_lp(routes, n, K):
    """LP relaxation of covering every request exactly once with at most K
    routes, minimizing total duration."""
    from scipy.optimize import linprog

    costs = np.array([c for _, c in routes])
    A_eq = np.zeros((n, len(routes)))
    for k, (seq, _) in enumerate(routes):
        for i in seq:
            A_eq[i, k] += 1
    res = linprog(costs, A_ub=np.ones((1, len(routes))), b_ub=[K], A_eq=A_eq, b_eq=np.ones(n),
                  bounds=[(0, None)] * len(routes), method="highs")
    return res


def set_partition_brute_force(columns, n, K, value, sense="min"):
    """Best exact cover of range(n) by at most K columns, by recursion on the
    lowest uncovered element. ``columns`` are tuples of element indices."""
    by_first = defaultdict(list)
    for k, col in enumerate(columns):
        if len(set(col)) == len(col):
            by_first[min(col)].append(k)
    best = [None, None]
    better = (lambda a, b: a < b - 1e-12) if sense == "min" else (lambda a, b: a > b + 1e-12)

    def rec(covered, chosen, total):
        if len(chosen) > K:
            return
        if len(covered) == n:
            if best[0] is None or better(total, best[0]):
                best[0], best[1] = total, list(chosen)
            return
        first = min(set(range(n)) - covered)
        for k in by_first[first]:
            col = set(columns[k])
            if col & covered:
                continue
            rec(covered | col, chosen + [k], total + value[k])

    rec(frozenset(), [], 0.0)
    return best[0], best[1]


def mka_dual_vertices(capacities, costs):
    """Multiple-knapsack LP value by brute-force vertex enumeration of its dual.

    The dual is min over prices y >= 0 of
    sum_k B_k y_k + sum_j max(0, max_k (1 - c_kj y_k)), a convex
    piecewise-linear function of at most a few prices. Its minimum sits at a
    vertex of the arrangement of breakpoint hyperplanes, so solving every
    square subsystem of those hyperplanes and keeping the best feasible point
    gives the LP value by strong duality."""
    B = np.asarray(capacities, float)
    C = np.asarray(costs, float)
    m, n = C.shape
    planes = []  # (normal, rhs)
    for k in range(m):
        e = np.zeros(m)
        e[k] = 1.0
        planes.append((e, 0.0))
        for j in range(n):
            if np.isfinite(C[k, j]):
                planes.append((C[k, j] * e, 1.0))
    for j in range(n):
        for k, l in itertools.combinations(range(m), 2):
            if np.isfinite(C[k, j]) and np.isfinite(C[l, j]):
                a = np.zeros(m)
                a[k], a[l] = C[k, j], -C[l, j]
                planes.append((a, 0.0))
    finite = np.isfinite(C)
    Cf = np.where(finite, C, 0.0)

    def value(y):
        gain = np.where(finite, 1.0 - Cf * y[:, None], -np.inf)
        return float(B @ y + np.maximum(0.0, gain.max(axis=0, initial=-np.inf)).sum())

    best = np.inf
    for combo in itertools.combinations(planes, m):
        M = np.array([a for a, _ in combo])
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        y = np.linalg.solve(M, np.array([r for _, r in combo]))
        if np.all(y >= -1e-12):
            best = min(best, value(np.maximum(y, 0.0)))
    return best
