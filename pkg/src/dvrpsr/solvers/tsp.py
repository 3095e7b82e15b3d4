"""Exact open-path TSP: start node, all targets in some order, end node.

Held-Karp (vectorized per subset size) for small target sets and a
depth-first branch-and-bound above that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._jit import njit

HELD_KARP_MAX = 15
TSP_CAP = 25


class TSPCapExceeded(ValueError):
    pass


@dataclass
class TSPResult:
    order: list  # indices into the target list
    value: float  # travel + service time from start to end
    exact: bool = True
    nodes: int = 0


def path_value(cost: np.ndarray, order) -> float:
    """Value of visiting ``order`` (1-based target rows) between row 0 and the last row."""
    end = cost.shape[0] - 1
    seq = [0, *[k + 1 for k in order], end]
    return float(sum(cost[a, b] for a, b in zip(seq[:-1], seq[1:])))


def solve_tsp_matrix(cost: np.ndarray, incumbent=None, node_limit: int = 200_000) -> TSPResult:
    """``cost`` is ``(n+2, n+2)``: row 0 is the start, rows ``1..n`` the
    targets and row ``n+1`` the end; ``cost[i, j]`` already includes the
    service time at ``j``. Returns the target order (0-based)."""
    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0] - 2
    if n < 0:
        raise ValueError("cost matrix needs start and end rows")
    if n > TSP_CAP:
        raise TSPCapExceeded(f"{n} targets exceed the exact TSP cap of {TSP_CAP}")
    if n == 0:
        return TSPResult([], float(cost[0, 1]))
    if n <= HELD_KARP_MAX:
        return _held_karp(cost)
    return _branch_and_bound(cost, incumbent, node_limit)


def _held_karp(cost: np.ndarray) -> TSPResult:
    n = cost.shape[0] - 2
    inner = cost[1:n + 1, 1:n + 1]
    full = (1 << n) - 1
    dp = np.full((1 << n, n), np.inf)
    parent = np.full((1 << n, n), -1, dtype=np.int8)
    bits = 1 << np.arange(n)
    dp[bits, np.arange(n)] = cost[0, 1:n + 1]
    masks = np.arange(1 << n)
    pop = np.zeros(1 << n, dtype=np.int64)
    for k in range(n):
        pop += (masks >> k) & 1
    for size in range(2, n + 1):
        layer = masks[pop == size]
        for j in range(n):
            sel = layer[(layer & bits[j]) != 0]
            prev = sel ^ bits[j]
            cand = dp[prev] + inner[:, j][None, :]
            arg = np.argmin(cand, axis=1)
            dp[sel, j] = cand[np.arange(sel.size), arg]
            parent[sel, j] = arg
    last = dp[full] + cost[1:n + 1, n + 1]
    j = int(np.argmin(last))
    value = float(last[j])
    order = []
    mask = full
    while j >= 0:
        order.append(j)
        pj = int(parent[mask, j])
        mask ^= 1 << j
        j = pj if mask else -1
    order.reverse()
    return TSPResult(order, value)


def _branch_and_bound(cost: np.ndarray, incumbent, node_limit: int) -> TSPResult:
    n = cost.shape[0] - 2
    if incumbent is None:
        # nearest neighbor
        incumbent, cur, left = [], 0, set(range(n))
        while left:
            nxt = min(left, key=lambda k: (cost[cur, k + 1], k))
            incumbent.append(nxt)
            left.discard(nxt)
            cur = nxt + 1
    order, value, nodes, exact = _bb_core(
        np.ascontiguousarray(cost), np.asarray(incumbent, dtype=np.int64), path_value(cost, incumbent), int(node_limit))
    return TSPResult(order.tolist(), float(value), bool(exact), int(nodes))


@njit
def _remaining_bound(cost, here, visited, n):
    """Every unvisited target and the end must still be entered once, from
    the current position or another unvisited target."""
    end = n + 1
    total = 0.0
    best_end = cost[here, end]
    for k in range(n):
        if visited[k]:
            continue
        best = cost[here, k + 1]
        for j in range(n):
            if j != k and not visited[j] and cost[j + 1, k + 1] < best:
                best = cost[j + 1, k + 1]
        total += best
        if cost[k + 1, end] < best_end:
            best_end = cost[k + 1, end]
    return total + best_end


@njit
def _bb_core(cost, incumbent, incumbent_value, node_limit):
    """Depth-first search over visit orders, children tried cheapest first,
    pruned by the cheapest entering arcs of everything still to visit."""
    n = cost.shape[0] - 2
    end = n + 1
    best_order = incumbent.copy()
    best_val = incumbent_value
    order = np.empty(n, dtype=np.int64)
    visited = np.zeros(n, dtype=np.bool_)
    cand = np.empty((n + 1, n), dtype=np.int64)
    ncand = np.zeros(n + 1, dtype=np.int64)
    ptr = np.zeros(n + 1, dtype=np.int64)
    acc = np.zeros(n + 1)
    here = np.zeros(n + 1, dtype=np.int64)
    keys = np.empty(n)
    nodes = 0
    exact = True

    d = 0
    ncand[0] = n
    for k in range(n):
        keys[k] = cost[0, k + 1]
    srt = np.argsort(keys[:n], kind="mergesort")
    for k in range(n):
        cand[0, k] = srt[k]
    while d >= 0:
        if ptr[d] >= ncand[d]:
            d -= 1
            if d >= 0:
                visited[order[d]] = False
            continue
        k = cand[d, ptr[d]]
        ptr[d] += 1
        step = acc[d] + cost[here[d], k + 1]
        if d + 1 == n:
            val = step + cost[k + 1, end]
            if val < best_val - 1e-12:
                best_val = val
                order[d] = k
                best_order[:] = order
            continue
        visited[k] = True
        if step + _remaining_bound(cost, k + 1, visited, n) >= best_val - 1e-12:
            visited[k] = False
            continue
        if nodes >= node_limit:
            exact = False
            visited[k] = False
            break
        nodes += 1
        order[d] = k
        d += 1
        acc[d] = step
        here[d] = k + 1
        m = 0
        for j in range(n):
            if not visited[j]:
                cand[d, m] = j
                keys[m] = cost[k + 1, j + 1]
                m += 1
        srt = np.argsort(keys[:m], kind="mergesort")
        tmp = cand[d, :m].copy()
        for j in range(m):
            cand[d, j] = tmp[srt[j]]
        ncand[d] = m
        ptr[d] = 0
    return best_order, best_val, nodes, exact


def solve_tsp(start: int, targets, end: int, oracle, node_limit: int = 200_000) -> TSPResult:
    """Visit order for ``targets`` given as ``(node, service)`` pairs,
    minimizing travel plus service time from ``start`` to ``end``."""
    nodes = np.array([start, *[node for node, _ in targets], end], dtype=np.int64)
    service = np.array([0.0, *[float(d) for _, d in targets], 0.0])
    return solve_tsp_matrix(oracle.matrix(nodes) + service[None, :], node_limit=node_limit)
