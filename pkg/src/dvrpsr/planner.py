"""Offline route planning for the static requests.

Column generation on the duration-constrained set-partitioning model builds
a pool of feasible routes; a myopic plan then picks routes of minimum total
duration, a potential-based plan picks routes of maximum sampled potential.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .demand import Request
from .network import TravelTimeOracle
from .potential import PotentialModel, SampleSet
from .routes import Route, Routing, budget, route_through
from .solvers.lp import LinearProgram, solve_lp
from .solvers._jit import njit
from .solvers.partition import PartitionInfeasible, PartitionProblem, solve_partition

log = logging.getLogger(__name__)

RC_TOL = 1e-7


class PlanningError(RuntimeError):
    def __init__(self, message: str, request_id=None):
        super().__init__(message)
        self.request_id = request_id


@dataclass(frozen=True)
class Column:
    """A route over the static requests, by index into the request list."""

    seq: tuple
    cost: float  # total duration: travel plus service

    @property
    def elementary(self) -> bool:
        return len(set(self.seq)) == len(self.seq)

    def covers(self) -> frozenset:
        return frozenset(self.seq)


def elementary_version(seq) -> tuple:
    """``seq`` with every visit after the first to the same request removed."""
    return tuple(dict.fromkeys(seq))


class AuxGraph:
    """Complete digraph on the depot (index ``n``) and the static requests
    (indices ``0..n-1``) with arc cost ``t(i, j) + d_j``."""

    def __init__(self, requests: Sequence[Request], oracle: TravelTimeOracle, horizon: float, depot: int = 0):
        self.requests = list(requests)
        self.horizon = horizon
        n = len(self.requests)
        self.n = n
        nodes = np.array([r.node for r in self.requests] + [depot], dtype=np.int64)
        T = oracle.matrix(nodes) if n else np.zeros((1, 1))
        dur = np.array([r.duration for r in self.requests] + [0.0])
        self.cost = T + dur[None, :]
        np.fill_diagonal(self.cost, np.inf)
        self.depot_out = self.cost[n, :n].copy()
        self.depot_in = self.cost[:n, n].copy()

    def subset(self, keep: Sequence[int]) -> "AuxGraph":
        """The auxiliary graph on requests ``keep`` (renumbered in order)."""
        keep = list(keep)
        sub = object.__new__(AuxGraph)
        sub.requests = [self.requests[i] for i in keep]
        sub.horizon = self.horizon
        sub.n = len(keep)
        idx = np.array(keep + [self.n], dtype=np.int64)
        sub.cost = self.cost[np.ix_(idx, idx)]
        sub.depot_out = sub.cost[sub.n, : sub.n].copy()
        sub.depot_in = sub.cost[: sub.n, sub.n].copy()
        return sub

    def route_cost(self, seq) -> float:
        if not seq:
            return 0.0
        c = self.depot_out[seq[0]] + self.depot_in[seq[-1]]
        for a, b in zip(seq[:-1], seq[1:]):
            c += self.cost[a, b]
        return float(c)


MAX_BOUND_STEPS = 20000
MAX_NG = 16


@njit
def _completion_bounds(cost, depot_in, duals, dual_fleet, unit, steps):
    """Lowest reduced cost of any walk from a request back to the depot
    that fits in ``tau`` time units, for every request and ``tau``.

    Arc times are floored to whole units, so every real completion is also
    a walk here and the bound is valid; revisits are allowed, which makes it
    a relaxation of the ng-routes as well.
    """
    n = duals.size
    lens = np.empty((n, n), dtype=np.int64)
    for v in range(n):
        for w in range(n):
            lens[v, w] = int(np.floor(cost[v, w] / unit)) if np.isfinite(cost[v, w]) else -1
    back = np.empty(n, dtype=np.int64)
    for v in range(n):
        back[v] = int(np.floor(depot_in[v] / unit))
    out = np.full((n, steps + 1), np.inf)
    for tau in range(steps + 1):
        for v in range(n):
            best = np.inf
            if back[v] <= tau:
                best = depot_in[v] - dual_fleet
            for w in range(n):
                s = lens[v, w]
                if s < 1 or s > tau:
                    continue
                val = cost[v, w] - duals[w] + out[w, tau - s]
                if val < best:
                    best = val
            out[v, tau] = best
    return out


@njit
def _grow(a, size):
    b = np.empty(size, dtype=a.dtype)
    b[: a.size] = a
    return b


@njit
def _label_search(cost, depot_out, depot_in, duals, dual_fleet, horizon, succ, pos, trans,
                  bounds, unit, use_bounds, max_labels, rc_tol):
    """Forward labeling in order of increasing duration.

    A label's memory is a bitmask over the ng-neighborhood of its node:
    ``pos[v, w]`` is the slot of ``w`` in that of ``v`` (or -1) and
    ``trans[v, w, q]`` maps slot ``q`` of ``v`` to the slot of the same
    request at ``w`` (or -1). ``succ[v]`` lists the requests a label at
    ``v`` may extend to, padded with -1.

    Labels leave the heap in nondecreasing duration, so a label can only be
    dominated by one processed before it. ``best[w, M]`` holds the lowest
    reduced cost among processed labels at ``w`` whose memory is a subset of
    ``M``, which makes the dominance test a single lookup.

    Returns the label arrays, the labels that close into negative
    reduced-cost routes with those reduced costs, and whether the label
    limit stopped the search.
    """
    n = duals.size
    g = trans.shape[2]
    full = (1 << g) - 1
    best = np.full((n, full + 1), np.inf)
    size = 1024
    node = np.empty(size, dtype=np.int64)
    rc = np.empty(size)
    dur = np.empty(size)
    mem = np.empty(size, dtype=np.int64)
    parent = np.empty(size, dtype=np.int64)
    heap = [(0.0, 0)]
    heap.pop()
    hits = []
    hit_rc = []
    steps = bounds.shape[1] - 1
    truncated = False
    count = 0
    lab = -1
    while True:
        if lab >= 0:
            v = node[lab]
            ext = succ[v]
        else:
            v = -1
            ext = np.arange(n)
        for e in range(ext.size):
            w = ext[e]
            if w < 0:
                break
            if lab >= 0:
                p = pos[v, w]
                if p >= 0 and (mem[lab] >> p) & 1:
                    continue
                step = cost[v, w]
                if not np.isfinite(step):
                    continue
                new_dur = dur[lab] + step
                new_rc = rc[lab] + step - duals[w]
                new_mem = np.int64(1) << pos[w, w]
                pm = mem[lab]
                for q in range(g):
                    if (pm >> q) & 1:
                        t = trans[v, w, q]
                        if t >= 0:
                            new_mem |= np.int64(1) << t
            else:
                new_dur = depot_out[w]
                new_rc = depot_out[w] - duals[w]
                new_mem = np.int64(1) << pos[w, w]
            if new_dur + depot_in[w] > horizon + 1e-9:
                continue
            if use_bounds:
                tau = int(np.floor((horizon - new_dur) / unit + 1e-9))
                tau = min(max(tau, 0), steps)
                if new_rc + bounds[w, tau] >= -rc_tol:
                    continue
            if best[w, new_mem] <= new_rc + 1e-12:
                continue
            if count >= max_labels:
                truncated = True
                break
            if count == size:
                size *= 2
                node = _grow(node, size)
                rc = _grow(rc, size)
                dur = _grow(dur, size)
                mem = _grow(mem, size)
                parent = _grow(parent, size)
            node[count] = w
            rc[count] = new_rc
            dur[count] = new_dur
            mem[count] = new_mem
            parent[count] = lab
            heapq.heappush(heap, (new_dur, count))
            count += 1
        if truncated:
            break
        # next undominated label
        lab = -1
        while len(heap) > 0:
            _, cand = heapq.heappop(heap)
            w = node[cand]
            if best[w, mem[cand]] <= rc[cand] + 1e-12:
                continue
            lab = cand
            break
        if lab < 0:
            break
        w = node[lab]
        m = mem[lab]
        r = rc[lab]
        sup = m
        while sup <= full:
            if r < best[w, sup]:
                best[w, sup] = r
            sup = (sup + 1) | m
        total = r + depot_in[w] - dual_fleet
        if total < -rc_tol:
            hits.append(lab)
            hit_rc.append(total)
    out_hits = np.empty(len(hits), dtype=np.int64)
    out_rc = np.empty(len(hits))
    for i in range(len(hits)):
        out_hits[i] = hits[i]
        out_rc[i] = hit_rc[i]
    return node[:count].copy(), parent[:count].copy(), out_hits, out_rc, truncated


def _ng_tables(aux: "AuxGraph", size: int):
    n = aux.n
    g = max(1, min(size, n))
    ng = np.empty((n, g), dtype=np.int64)
    for i in range(n):
        sym = np.minimum(aux.cost[i, :n], aux.cost[:n, i])
        sym[i] = -1.0
        ng[i] = np.argsort(sym, kind="stable")[:g]
    pos = np.full((n, n), -1, dtype=np.int64)
    for v in range(n):
        pos[v, ng[v]] = np.arange(g)
    trans = np.full((n, n, g), -1, dtype=np.int64)
    for v in range(n):
        for w in range(n):
            trans[v, w] = pos[w, ng[v]]
    return ng, pos, trans


def price_columns(
    aux: AuxGraph,
    duals: np.ndarray,
    dual_fleet: float,
    ng_size: int = 8,
    max_columns: int = 200,
    arc_limit: Optional[int] = None,
    max_labels: int = 20_000_000,
    use_bounds: bool = True,
) -> list:
    """Negative reduced-cost columns by labeling with ng-route memory.

    ``duals[i]`` belongs to the covering row of request ``i`` and
    ``dual_fleet`` to the fleet-size row. With ``arc_limit`` a label only
    extends along that many arcs of lowest reduced cost out of its request,
    which makes the search heuristic. Returns up to ``max_columns`` columns, most
    negative first.
    """
    n = aux.n
    if n == 0:
        return []
    if not 1 <= ng_size <= MAX_NG:
        raise ValueError(f"ng-neighborhood size must lie in [1, {MAX_NG}]")
    duals = np.ascontiguousarray(duals, dtype=float)
    ng, pos, trans = _ng_tables(aux, ng_size)
    inner = np.ascontiguousarray(aux.cost[:n, :n])
    reduced = inner - duals[None, :]
    succ = np.argsort(reduced, axis=1, kind="stable")
    if arc_limit is not None and arc_limit < n:
        succ = succ[:, :arc_limit]
    succ = np.ascontiguousarray(succ, dtype=np.int64)
    finite = inner[np.isfinite(inner)]
    shortest = min(finite.min(initial=np.inf), aux.depot_in.min())
    enabled = use_bounds and shortest > 0 and aux.horizon / shortest <= MAX_BOUND_STEPS
    if enabled:
        unit = float(shortest)
        steps = int(np.floor(aux.horizon / unit + 1e-9))
        bounds = _completion_bounds(inner, aux.depot_in, duals, float(dual_fleet), unit, steps)
    else:
        unit = 1.0
        bounds = np.zeros((n, 1))
    node, parent, hits, hit_rc, truncated = _label_search(
        inner, aux.depot_out, aux.depot_in, duals, float(dual_fleet), float(aux.horizon),
        succ, pos, trans, bounds, unit, enabled, int(max_labels), RC_TOL)
    if truncated:
        log.warning("pricing stopped at the label limit %d", max_labels)
    found: dict = {}
    for lab, val in zip(hits.tolist(), hit_rc.tolist()):
        seq = []
        while lab >= 0:
            seq.append(int(node[lab]))
            lab = int(parent[lab])
        seq = tuple(reversed(seq))
        if seq not in found or val < found[seq]:
            found[seq] = val
    ranked = sorted(found.items(), key=lambda kv: (kv[1], kv[0]))[:max_columns]
    return [Column(seq, aux.route_cost(seq)) for seq, _ in ranked]


@dataclass
class ColumnPool:
    aux: AuxGraph
    columns: list  # every column ever in the restricted master, seeds first
    lp_bound: float
    rounds: int
    converged: bool
    duals: np.ndarray = field(repr=False, default=None)
    solution: dict = field(repr=False, default_factory=dict)  # column index -> LP value
    repaired: bool = False

    @property
    def requests(self) -> list:
        return self.aux.requests

    def partition_columns(self) -> list:
        """Columns usable in an integer plan: the elementary pool columns plus
        shortcut versions of the others (later repeat visits dropped, which
        never lengthens a route under fastest-path times)."""
        out, seen = [], set()
        for c in self.columns:
            if not c.elementary:
                seq = elementary_version(c.seq)
                c = Column(seq, self.aux.route_cost(seq))
            if c.seq not in seen and c.cost <= self.aux.horizon + 1e-9:
                seen.add(c.seq)
                out.append(c)
        return out


def _rmp(aux: AuxGraph, columns: list, K: int, big_m: float):
    n = aux.n
    m = len(columns)
    # artificial singletons keep the master feasible for any fleet size
    A = np.zeros((n + 1, m + n))
    for j, col in enumerate(columns):
        for i in col.seq:
            A[i, j] += 1.0
        A[n, j] = 1.0
    A[np.arange(n), m + np.arange(n)] = 1.0
    cost = np.r_[[c.cost for c in columns], np.full(n, big_m)]
    lp = LinearProgram(cost, A, ["="] * n + ["<="], np.r_[np.ones(n), float(K)], sense="min")
    return lp, solve_lp(lp)


def lagrangian_bound(duals: np.ndarray, K: int, min_reduced: float) -> float:
    """Lower bound on the master LP from cover-row prices ``duals`` and the
    least value of ``cost - duals(covered)`` over all columns."""
    return float(duals.sum() + K * min(0.0, min_reduced))


def generate_columns(
    requests: Sequence[Request],
    oracle: TravelTimeOracle,
    horizon: float,
    K: int,
    ng_size: int = 8,
    max_new: int = 200,
    heuristic_arcs: tuple = (3, 6),
    smoothing: float = 0.7,
    gap_tol: float = 1e-7,
    max_rounds: int = 2000,
    rmp_limit: int = 4000,
    depot: int = 0,
) -> ColumnPool:
    """Column generation on the linear relaxation of the set-partitioning
    model, seeded with one out-and-back column per request.

    Pricing uses smoothed prices (a convex combination of the best-bound
    prices so far and the current master duals); each exact pricing call
    yields a Lagrangian bound, and the loop stops when the master value
    meets it or no column prices out at the master duals.

    Every generated column stays in the pool. When the restricted master
    grows past ``rmp_limit`` columns, those with the largest reduced costs
    are set aside; pricing brings them back if they become attractive.
    """
    aux = AuxGraph(requests, oracle, horizon, depot)
    for i, r in enumerate(aux.requests):
        if aux.depot_out[i] + aux.depot_in[i] > horizon + 1e-9:
            raise PlanningError(f"static request {r.id} cannot be served within the horizon", r.id)
    return _column_generation(aux, K, ng_size, max_new, heuristic_arcs, smoothing, gap_tol, max_rounds, rmp_limit)


def _column_generation(aux, K, ng_size=8, max_new=200, heuristic_arcs=(3, 6), smoothing=0.7,
                       gap_tol=1e-7, max_rounds=2000, rmp_limit=4000) -> ColumnPool:
    n = aux.n
    horizon = aux.horizon
    columns = [Column((i,), aux.route_cost((i,))) for i in range(n)]
    if n == 0:
        return ColumnPool(aux, [], 0.0, 0, True, np.zeros(0))
    index = {c.seq: j for j, c in enumerate(columns)}
    active = list(range(n))
    big_m = 10.0 * (horizon + float(aux.depot_out.sum() + aux.depot_in.sum()))
    rounds = 0
    converged = False
    center = None
    best_bound = -np.inf
    while True:
        rounds += 1
        lp, res = _rmp(aux, [columns[j] for j in active], K, big_m)
        if res.objective - best_bound <= gap_tol:
            converged = True
            break
        if rounds > max_rounds:
            break
        duals, dual_fleet = res.duals[:n], res.duals[n]
        live = set(active)
        alpha = smoothing if center is not None else 0.0
        found: list = []
        while True:
            prices = duals if alpha == 0.0 else alpha * center + (1.0 - alpha) * duals
            # cheap restricted-arc pricing first, the full search only when it fails
            for limit in (*heuristic_arcs, None):
                cand = price_columns(aux, prices, 0.0, ng_size, max_new, arc_limit=limit)
                if limit is None:
                    least = cand[0].cost - prices[list(cand[0].seq)].sum() if cand else 0.0
                    bound = lagrangian_bound(prices, K, least)
                    if bound > best_bound:
                        best_bound, center = bound, prices.copy()
                found = [
                    c for c in cand
                    if index.get(c.seq) not in live
                    and c.cost - duals[list(c.seq)].sum() - dual_fleet < -RC_TOL
                ]
                if found:
                    break
            if found or alpha == 0.0:
                break
            alpha = 0.0  # smoothed prices found nothing useful: use the master duals
        if not found:
            converged = True
            break
        if len(active) + len(found) > rmp_limit:
            rc = res.reduced_costs[: len(active)]
            x = res.x[: len(active)]
            keep = max(rmp_limit // 2, rmp_limit - len(found))
            order = np.lexsort((np.arange(len(active)), rc))
            kept = {active[j] for j in order[:keep]}
            kept.update(active[j] for j in np.flatnonzero(x > 1e-12))
            active = sorted(kept)
        for c in found:
            j = index.get(c.seq)
            if j is None:
                j = len(columns)
                columns.append(c)
                index[c.seq] = j
            active.append(j)
    art = res.x[len(active):]
    if art.max(initial=0.0) > 1e-7:
        raise PlanningError(f"static requests cannot be covered with {K} vehicles")
    if not converged:
        log.warning("column generation stopped after %d rounds without convergence", max_rounds)
    solution = {j: float(v) for j, v in zip(active, res.x[: len(active)]) if v > 1e-9}
    return ColumnPool(aux, columns, float(res.objective), rounds, converged, res.duals, solution)


def dive(pool: ColumnPool, K: int) -> list:
    """Find an integer plan by repeatedly fixing the column with the largest
    LP value and regenerating columns for the requests left over. Columns
    met on the way are added to ``pool``; returns the fixed columns."""
    aux = pool.aux
    known = {c.seq for c in pool.columns}
    left = list(range(aux.n))  # sub-problem index -> full index
    current = pool
    fixed = []
    while True:
        if current is not pool:
            for c in current.columns:
                seq = tuple(left[i] for i in c.seq)
                if seq not in known:
                    known.add(seq)
                    pool.columns.append(Column(seq, c.cost))
        if not current.solution:
            raise PlanningError("diving found no LP solution to follow")
        j = max(sorted(current.solution), key=lambda k: current.solution[k])
        seq = tuple(left[i] for i in elementary_version(current.columns[j].seq))
        fixed.append(Column(seq, aux.route_cost(seq)))
        taken = set(seq)
        left = [i for i in left if i not in taken]
        if not left:
            return fixed
        if len(fixed) >= K:
            raise PlanningError(f"diving used all {K} vehicles before covering every static request")
        try:
            current = _column_generation(aux.subset(left), K - len(fixed))
        except PlanningError as exc:
            raise PlanningError(f"diving failed: {exc}") from exc


@dataclass
class Plan:
    """Initial routes; vehicle ``k`` gets ``routes[k]`` when ``k < len(routes)``
    and starts idle otherwise. All routes leave the depot at time 0."""

    routes: list
    K: int
    objective: float = 0.0
    kind: str = "myopic"

    def vehicles(self) -> tuple:
        return tuple(Routing(0.0, r) for r in self.routes) + (None,) * (self.K - len(self.routes))

    def total_duration(self) -> float:
        return float(sum(r.duration for r in self.routes))

    def check(self, requests: Sequence[Request], horizon: float) -> None:
        if len(self.routes) > self.K:
            raise PlanningError("plan uses more routes than vehicles")
        served = [q.id for r in self.routes for q in r.requests]
        want = sorted(q.id for q in requests)
        if sorted(served) != want:
            raise PlanningError("plan does not cover every static request exactly once")
        for r in self.routes:
            if budget(0.0, r, horizon) < -1e-9:
                raise PlanningError("plan contains a route that ends after the horizon")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "K": self.K,
            "objective": self.objective,
            "routes": [r.to_json() for r in self.routes],
            "assignment": {str(k): k for k in range(len(self.routes))},
        }

    @classmethod
    def from_json(cls, data: dict, requests: Sequence[Request], oracle: TravelTimeOracle) -> "Plan":
        by_id = {q.id: q for q in requests}
        routes = []
        for stops in data["routes"]:
            nodes = tuple(int(s["node"]) for s in stops)
            try:
                serve = tuple(tuple(by_id[int(i)] for i in s["serve"]) for s in stops)
            except KeyError as exc:
                raise PlanningError(f"plan refers to unknown request {exc}") from None
            legs = np.array([oracle.arc_time(a, b) for a, b in zip(nodes[:-1], nodes[1:])])
            route = Route(nodes, serve, legs)
            route.check(oracle)
            routes.append(route)
        order = data.get("assignment")
        if order:
            ranked = sorted(((int(k), int(v)) for k, v in order.items()), key=lambda kv: kv[0])
            routes = [routes[v] for _, v in ranked]
        return cls(routes, int(data["K"]), float(data.get("objective", 0.0)), data.get("kind", "myopic"))


def materialize(column: Column, aux: AuxGraph, oracle: TravelTimeOracle, depot: int = 0) -> Route:
    reqs = [aux.requests[i] for i in column.seq]
    return route_through(oracle, [(q.node, (q,)) for q in reqs], depot=depot)


def _select(pool: ColumnPool, K: int, value, sense: str, tie_penalty: float = 0.0):
    """Best partition over the pool for the column scores ``value(columns)``.
    If the pool admits no partition with at most ``K`` routes, it is first
    extended by diving."""
    universe = list(range(pool.aux.n))
    for attempt in range(2):
        cols = pool.partition_columns()
        problem = PartitionProblem(value(cols), [c.covers() for c in cols], universe, K, sense)
        try:
            res = solve_partition(problem, tie_penalty=tie_penalty)
            return [cols[j] for j in res.selected], res.objective
        except PartitionInfeasible as exc:
            if attempt or pool.repaired or exc.element is not None:
                rid = pool.requests[exc.element].id if exc.element is not None else None
                raise PlanningError(str(exc), rid) from exc
            log.info("route pool has no partition with %d routes; diving", K)
            dive(pool, K)
            pool.repaired = True
    raise AssertionError("unreachable")


def plan_myopic(pool: ColumnPool, K: int, oracle: TravelTimeOracle, depot: int = 0) -> Plan:
    """Routes covering all static requests with minimum total duration."""
    if pool.aux.n == 0:
        return Plan([], K, 0.0, "myopic")
    chosen, obj = _select(pool, K, lambda cols: np.array([c.cost for c in cols]), "min")
    routes = [materialize(c, pool.aux, oracle, depot) for c in chosen]
    return Plan(routes, K, obj, "myopic")


class PotentialScorer:
    """Mean single-knapsack potential of pool columns, each materialized
    as a street route leaving the depot at time 0. Memoized per column."""

    def __init__(self, pool: ColumnPool, paths, oracle: TravelTimeOracle, depot: int = 0):
        self.pool = pool
        self.oracle = oracle
        self.depot = depot
        samples = paths if isinstance(paths, SampleSet) else SampleSet(paths)
        self.model = PotentialModel(oracle, pool.aux.horizon, 0.0, samples)
        self.routes: dict = {}
        self.values: dict = {}

    def route(self, col: Column) -> Route:
        r = self.routes.get(col.seq)
        if r is None:
            r = self.routes[col.seq] = materialize(col, self.pool.aux, self.oracle, self.depot)
        return r

    def __call__(self, cols) -> np.ndarray:
        out = np.empty(len(cols))
        for k, c in enumerate(cols):
            v = self.values.get(c.seq)
            if v is None:
                if self.model.samples.H:
                    v = float(self.model.single(Routing(0.0, self.route(c))).mean())
                else:
                    v = 0.0
                self.values[c.seq] = v
            out[k] = v
        return out


def potential_coefficients(pool: ColumnPool, paths, oracle: TravelTimeOracle, depot: int = 0) -> tuple:
    """Partition columns of the pool and their potential coefficients."""
    cols = pool.partition_columns()
    return cols, PotentialScorer(pool, paths, oracle, depot)(cols)


def plan_potential(pool: ColumnPool, K: int, paths, oracle: TravelTimeOracle, depot: int = 0) -> Plan:
    """Routes covering all static requests with maximum sampled potential.
    Exact ties go to the selection with fewer routes."""
    if pool.aux.n == 0:
        return Plan([], K, 0.0, "potential")
    scorer = PotentialScorer(pool, paths, oracle, depot)
    chosen, obj = _select(pool, K, scorer, "max", tie_penalty=1e-9)
    return Plan([scorer.route(c) for c in chosen], K, obj, "potential")
