"""Routes, budgets, route adjustment (cheapest insertion and reoptimization)
and prediction of future vehicle locations at effective speed."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .demand import Request
from .network import TravelTimeOracle
from .solvers.tsp import TSPCapExceeded, solve_tsp_matrix

EPS = 1e-9


class RouteError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Route:
    """A closed walk from the depot back to the depot.

    ``serve[p]`` holds the requests served, in order, at ``nodes[p]``;
    ``legs[p]`` is the travel time of arc ``(nodes[p], nodes[p+1])``.
    """

    nodes: tuple
    serve: tuple
    legs: np.ndarray

    def __post_init__(self):
        if len(self.nodes) < 1 or len(self.serve) != len(self.nodes) or len(self.legs) != len(self.nodes) - 1:
            raise RouteError("inconsistent route arrays")

    @classmethod
    def trivial(cls, depot: int = 0) -> "Route":
        return cls((depot,), ((),), np.zeros(0))

    @property
    def last(self) -> int:
        return len(self.nodes) - 1

    @cached_property
    def service(self) -> np.ndarray:
        return np.array([sum(r.duration for r in s) for s in self.serve], dtype=float)

    @cached_property
    def arrival_offsets(self) -> np.ndarray:
        """Arrival time at each position, relative to the route start."""
        out = np.zeros(len(self.nodes))
        if len(self.nodes) > 1:
            out[1:] = np.cumsum(self.legs + self.service[:-1])
        return out

    @cached_property
    def departure_offsets(self) -> np.ndarray:
        return self.arrival_offsets + self.service

    @property
    def duration(self) -> float:
        return float(self.arrival_offsets[-1] + self.service[-1])

    @property
    def travel_time(self) -> float:
        return float(self.legs.sum())

    @property
    def requests(self) -> list:
        return [r for s in self.serve for r in s]

    def stops(self) -> list:
        """``(position, node, requests)`` for positions that serve requests."""
        return [(p, self.nodes[p], s) for p, s in enumerate(self.serve) if s]

    def check(self, oracle: Optional[TravelTimeOracle] = None, depot: int = 0) -> None:
        if self.nodes[0] != depot or self.nodes[-1] != depot or self.serve[0] or self.serve[-1]:
            raise RouteError("route must start and end at the depot with empty serve sets")
        seen = set()
        for node, reqs in zip(self.nodes, self.serve):
            for r in reqs:
                if r.node != node:
                    raise RouteError(f"request {r.id} served at node {node} but located at {r.node}")
                key = (r.id, r.arrival, r.node)
                if key in seen:
                    raise RouteError(f"request {r.id} appears twice")
                seen.add(key)
        if oracle is not None:
            for p, (a, b) in enumerate(zip(self.nodes[:-1], self.nodes[1:])):
                if (a, b) not in oracle.graph.arc_length:
                    raise RouteError(f"({a}, {b}) is not an arc")
                if abs(oracle.arc_time(a, b) - self.legs[p]) > 1e-9:
                    raise RouteError(f"leg {p} time disagrees with the arc")

    def to_json(self) -> list:
        return [{"node": int(n), "serve": [r.id for r in s]} for n, s in zip(self.nodes, self.serve)]


@dataclass(frozen=True, eq=False)
class Routing:
    """Vehicle state while executing ``route`` that left the depot at ``start``.
    Idle vehicles are represented by ``None``."""

    start: float
    route: Route


VehicleState = Optional[Routing]


def budget(start: float, route: Route, horizon: float) -> float:
    """Slack of ``route`` started at ``start`` relative to the end of service."""
    return horizon - start - route.duration


def vehicle_budget(v: Routing, horizon: float) -> float:
    return budget(v.start, v.route, horizon)


# -- building routes --------------------------------------------------------


def _append_path(nodes: list, legs: list, oracle: TravelTimeOracle, target: int) -> None:
    path = oracle.fastest_path(nodes[-1], target)
    for a, b in zip(path[:-1], path[1:]):
        legs.append(oracle.arc_time(a, b))
        nodes.append(b)


def route_through(oracle: TravelTimeOracle, waypoints: Sequence, prefix: Optional[Route] = None, depot: int = 0) -> Route:
    """Route visiting ``waypoints`` ``[(node, requests), ...]`` via fastest
    paths and ending at the depot.

    With ``prefix`` the walk continues from the prefix's last position;
    otherwise it starts at the depot. Consecutive waypoints at the same node
    are merged.
    """
    if prefix is None:
        nodes, serve, legs = [depot], [[]], []
    else:
        nodes, serve, legs = list(prefix.nodes), [list(s) for s in prefix.serve], list(prefix.legs)
    for node, reqs in list(waypoints) + [(depot, ())]:
        if node != nodes[-1]:
            _append_path(nodes, legs, oracle, node)
            serve.extend([] for _ in range(len(nodes) - len(serve)))
        serve[-1].extend(reqs)
    return Route(tuple(nodes), tuple(tuple(s) for s in serve), np.asarray(legs, dtype=float))


def out_and_back(oracle: TravelTimeOracle, request: Request, depot: int = 0) -> Route:
    return route_through(oracle, [(request.node, (request,))], depot=depot)


def _prefix(route: Route, upto: int) -> Route:
    return Route(route.nodes[:upto + 1], route.serve[:upto + 1], route.legs[:upto])


# -- position -----------------------------------------------------------------


@dataclass
class PositionReport:
    status: str  # "in_transit" | "in_service" | "done"
    position: int  # arc tail index in transit, node index in service, last index when done
    fraction: float = 0.0  # along the arc, in transit
    elapsed: float = 0.0  # service time spent, in service
    anchor: int = -1  # first position the route may still change after
    onward_nodes: list = field(default_factory=list)
    arc: tuple = ()

    @property
    def node(self) -> int:
        return self.onward_nodes[0] if self.onward_nodes else -1


def locate(v: Routing, now: float) -> PositionReport:
    """Position of a routing vehicle at ``now`` under its schedule."""
    if v is None:
        raise RouteError("idle vehicles have no route to replay")
    t = now - v.start
    if t < -EPS:
        raise RouteError(f"time {now} precedes the route start {v.start}")
    t = max(t, 0.0)
    r = v.route
    arr, dep = r.arrival_offsets, r.departure_offsets
    L = r.last
    if t >= arr[L] - EPS:
        return PositionReport("done", L, anchor=L, onward_nodes=[])
    p = int(np.searchsorted(dep, t, side="right")) - 1
    if t < arr[p + 1]:
        frac = (t - dep[p]) / r.legs[p] if r.legs[p] > 0 else 0.0
        return PositionReport(
            "in_transit", p, fraction=float(frac), anchor=p + 1,
            onward_nodes=list(r.nodes[p + 1:]), arc=(r.nodes[p], r.nodes[p + 1]),
        )
    q = p + 1
    return PositionReport("in_service", q, elapsed=float(t - arr[q]), anchor=q, onward_nodes=list(r.nodes[q:]))


def is_finished(v: VehicleState, now: float) -> bool:
    return v is None or now - v.start >= v.route.arrival_offsets[-1] - EPS


def release_finished(vehicles, now: float) -> list:
    """Vehicles whose routes are complete by ``now`` become idle."""
    return [None if is_finished(v, now) else v for v in vehicles]


def unserved_requests(v: Routing, now: float) -> list:
    """Requests not yet started (the reorderable part of the route)."""
    rep = locate(v, now)
    if rep.status == "done":
        return []
    first = rep.anchor + (1 if rep.status == "in_service" else 0)
    return [q for s in v.route.serve[first:] for q in s]


def remaining_travel(v: Routing, rep: PositionReport) -> float:
    """Travel time left on the route at its nominal speed."""
    r = v.route
    if rep.status == "done":
        return 0.0
    if rep.status == "in_transit":
        p = rep.position
        return float(r.legs[p] * (1.0 - rep.fraction) + r.legs[p + 1:].sum())
    return float(r.legs[rep.position:].sum())


# -- effective speed and location prediction ----------------------------------


def effective_speed(v: Routing, now: float, speed: float, horizon: float) -> float:
    """Speed at which the remaining route ends exactly at ``horizon``."""
    if v is None:
        raise RouteError("effective speed is undefined for an idle vehicle")
    rep = locate(v, now)
    dist = remaining_travel(v, rep) * speed
    if dist <= 0:
        raise RouteError("no distance left on the route")
    b = vehicle_budget(v, horizon)
    return dist * speed / (dist + b * speed)


class Forecast:
    """Predicted departure times from every onward route position when the
    rest of the route is driven at effective speed.

    Travel times are stretched by ``1 + b / T`` where ``b`` is the budget and
    ``T`` the nominal remaining travel time; service times are unchanged.
    """

    def __init__(self, v: Routing, now: float, horizon: float):
        if v is None:
            raise RouteError("cannot forecast an idle vehicle")
        self.vehicle = v
        self.now = now
        self.horizon = horizon
        rep = locate(v, now)
        self.report = rep
        r = v.route
        self.budget = vehicle_budget(v, horizon)
        if rep.status == "done":
            self.positions = np.zeros(0, dtype=np.int64)
            self.depart = np.zeros(0)
            self.stretch = 1.0
            return
        rem = remaining_travel(v, rep)
        if rem <= 0:
            raise RouteError("no distance left on the route")
        self.stretch = 1.0 + self.budget / rem
        a = rep.anchor
        if rep.status == "in_transit":
            first_arrival = now + self.stretch * (v.start + r.arrival_offsets[a] - now)
        else:
            first_arrival = now - rep.elapsed
        steps = self.stretch * r.legs[a:] + r.service[a + 1:]
        depart = np.empty(r.last - a + 1)
        depart[0] = first_arrival + r.service[a]
        depart[1:] = depart[0] + np.cumsum(steps)
        self.positions = np.arange(a, r.last + 1)
        self.depart = depart
        self._suffix_min = None

    @property
    def nodes(self) -> np.ndarray:
        return np.asarray(self.vehicle.route.nodes, dtype=np.int64)[self.positions]

    @property
    def end_time(self) -> float:
        return float(self.depart[-1]) if self.depart.size else self.now

    def first_index(self, when) -> np.ndarray:
        """Index into ``positions`` of the first position not yet left at ``when``."""
        return np.searchsorted(self.depart, np.asarray(when) + EPS, side="right")

    def onward_nodes(self, when: float) -> list:
        k = int(self.first_index(when))
        return self.nodes[k:].tolist()

    def suffix_min(self, oracle: TravelTimeOracle) -> np.ndarray:
        """``M[q, i] = min over positions p >= q of t(p, i) + t(i, p)``."""
        if self._suffix_min is None:
            nodes = self.nodes
            if nodes.size == 0:
                self._suffix_min = np.zeros((0, oracle.graph.n_nodes))
            else:
                uniq, inv = np.unique(nodes, return_inverse=True)
                rows = oracle.round_trip_rows(uniq)[inv]
                self._suffix_min = np.minimum.accumulate(rows[::-1], axis=0)[::-1]
        return self._suffix_min

    def costs(self, oracle: TravelTimeOracle, times, nodes, durations) -> np.ndarray:
        """Vectorized insertion cost of future requests; ``inf`` when the
        vehicle is predicted to have left every route node by then."""
        times = np.asarray(times, dtype=float)
        out = np.full(times.shape, np.inf)
        if times.size == 0 or self.positions.size == 0:
            return out
        k = self.first_index(times)
        ok = k < self.positions.size
        if ok.any():
            M = self.suffix_min(oracle)
            out[ok] = M[k[ok], np.asarray(nodes)[ok]] + np.asarray(durations)[ok]
        return out


def predict_onward_nodes(v: Routing, now: float, when: float, horizon: float) -> list:
    if v is None:
        raise RouteError("idle vehicles have no predicted location")
    if when < now - EPS:
        raise RouteError("prediction time precedes the current time")
    return Forecast(v, now, horizon).onward_nodes(when)


def insertion_cost(v: Routing, now: float, request: Request, oracle: TravelTimeOracle, horizon: float) -> float:
    """Minimum round-trip detour plus service from a node the vehicle is
    predicted to still reach after the request arrives; ``inf`` if none."""
    if request.arrival < now - EPS:
        raise RouteError("request arrives before the current time")
    f = Forecast(v, now, horizon)
    return float(f.costs(oracle, [request.arrival], [request.node], [request.duration])[0])


# -- route adjustment -----------------------------------------------------------


@dataclass
class Adjustment:
    route: Route
    budget: float
    fallback: bool = False  # reoptimization fell back to cheapest insertion


def _waypoints(v: Routing, rep: PositionReport) -> list:
    r = v.route
    a = rep.anchor
    return [a] + [p for p in range(a + 1, r.last) if r.serve[p]] + [r.last]


def ci_evaluate(v: Routing, request: Request, oracle: TravelTimeOracle):
    """Best cheapest-insertion slot as ``(consumption, slot, waypoints, report)``,
    or ``None`` if the route is already finished. Nothing is materialized."""
    r = v.route
    rep = locate(v, request.arrival)
    if rep.status == "done":
        return None
    i = request.node
    wp = _waypoints(v, rep)
    T_to_i = oracle.times_to(i)
    T_from_i = oracle.times_from(i)
    if len(wp) == 1:  # arriving at the final depot: extend the route
        n0 = r.nodes[wp[0]]
        return float(T_to_i[n0] + T_from_i[n0] + request.duration), 0, wp, rep
    a = np.asarray(wp[:-1])
    b = np.asarray(wp[1:])
    nodes = np.asarray(r.nodes)
    na, nb = nodes[a], nodes[b]
    seg = r.arrival_offsets[b] - r.departure_offsets[a]
    delta = T_to_i[na] + T_from_i[nb] + request.duration - seg
    # co-located with a waypoint: merge into it at cost d
    delta = np.where((na == i) | ((nb == i) & (b != r.last)), request.duration, delta)
    s = int(np.argmin(delta))
    return float(delta[s]), s, wp, rep


def insert_ci(v: Routing, request: Request, oracle: TravelTimeOracle, horizon: float) -> Optional[Adjustment]:
    """Cheapest insertion without reordering scheduled requests.

    Returns the adjusted route with maximum budget (earliest slot on ties),
    or ``None`` when that budget is negative.
    """
    best = ci_evaluate(v, request, oracle)
    if best is None:
        return None
    delta, s, wp, rep = best
    if vehicle_budget(v, horizon) - delta < -EPS:
        return None
    new = _insert_at(v, rep, wp, s, request, oracle)
    b_new = vehicle_budget(Routing(v.start, new), horizon)
    if b_new < -EPS:
        return None
    return Adjustment(new, b_new)


def _insert_at(v: Routing, rep: PositionReport, wp: list, slot: int, request: Request, oracle) -> Route:
    r = v.route
    i = request.node
    if len(wp) == 1:
        return route_through(oracle, [(i, (request,))], prefix=r)
    a, b = wp[slot], wp[slot + 1]
    serve = list(r.serve)
    if r.nodes[a] == i:
        serve[a] = serve[a] + (request,)
        return Route(r.nodes, tuple(serve), r.legs)
    if r.nodes[b] == i and b != r.last:
        serve[b] = serve[b] + (request,)
        return Route(r.nodes, tuple(serve), r.legs)
    nodes, legs = list(r.nodes[:a + 1]), list(r.legs[:a])
    _append_path(nodes, legs, oracle, i)
    new_serve = list(r.serve[:a + 1]) + [()] * (len(nodes) - a - 2) + [(request,)]
    _append_path(nodes, legs, oracle, r.nodes[b])
    new_serve += [()] * (len(nodes) - len(new_serve) - 1) + [r.serve[b]]
    nodes += list(r.nodes[b + 1:])
    legs += list(r.legs[b:])
    new_serve += list(r.serve[b + 1:])
    return Route(tuple(nodes), tuple(new_serve), np.asarray(legs, dtype=float))


def reoptimize(
    v: Routing,
    request: Request,
    oracle: TravelTimeOracle,
    horizon: float,
    node_limit: int = 50_000,
) -> Optional[Adjustment]:
    """Exact resequencing of all unserved requests plus ``request``.

    Co-located requests form one stop. Falls back to cheapest insertion
    (flagged) when the open TSP cannot be solved exactly.
    """
    now = request.arrival
    r = v.route
    rep = locate(v, now)
    if rep.status == "done":
        return None
    a = rep.anchor
    in_service = rep.status == "in_service"
    fixed_anchor = r.serve[a] if in_service else ()
    groups: dict = {}
    order_ci: list = []  # node order under the current schedule, then the new request
    first = a + (1 if in_service else 0)
    for p in range(first, r.last):
        for q in r.serve[p]:
            if q.node not in groups:
                groups[q.node] = []
                order_ci.append(q.node)
            groups[q.node].append(q)
    if request.node not in groups:
        groups[request.node] = []
        order_ci.append(request.node)
    groups[request.node].append(request)
    targets = order_ci
    start = r.nodes[a]
    depot = r.nodes[r.last]
    pts = np.array([start, *targets, depot], dtype=np.int64)
    service = np.array([0.0] + [sum(q.duration for q in groups[n]) for n in targets] + [0.0])
    cost = oracle.matrix(pts) + service[None, :]
    try:
        res = solve_tsp_matrix(cost, incumbent=list(range(len(targets))), node_limit=node_limit)
    except TSPCapExceeded:
        res = None
    if res is None or not res.exact:
        ci = insert_ci(v, request, oracle, horizon)
        if ci is not None:
            ci.fallback = True
        return ci
    prefix = _prefix(r, a)
    if in_service:
        prefix = Route(prefix.nodes, prefix.serve[:-1] + (fixed_anchor,), prefix.legs)
    else:
        prefix = Route(prefix.nodes, prefix.serve[:-1] + ((),), prefix.legs)
    waypoints = [(targets[k], tuple(groups[targets[k]])) for k in res.order]
    new = route_through(oracle, waypoints, prefix=prefix, depot=depot)
    b_new = vehicle_budget(Routing(v.start, new), horizon)
    if b_new < -EPS:
        return None
    return Adjustment(new, b_new)


ROUTING_POLICIES = {"CI": insert_ci, "R": reoptimize}


def adjust(policy: str, v: Routing, request: Request, oracle: TravelTimeOracle, horizon: float) -> Optional[Adjustment]:
    try:
        fn = ROUTING_POLICIES[policy]
    except KeyError:
        raise ValueError(f"unknown routing policy {policy!r}") from None
    return fn(v, request, oracle, horizon)
