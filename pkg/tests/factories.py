"""Random instances shared by several test modules."""

import numpy as np

from dvrpsr.demand import Request
from dvrpsr.network import TravelTimeOracle, generate_grid, kmh_to_m_per_min
from dvrpsr.routes import Routing, locate, route_through

HORIZON = 600.0


def grid_oracle(rows=8, cols=8, spacing=800.0, seed=0, jitter=0.1):
    g = generate_grid(rows, cols, spacing, seed=seed, jitter=jitter)
    return TravelTimeOracle(g, kmh_to_m_per_min(20.0))


def random_requests(rng, oracle, n, first_id=0, arrival=0.0):
    nodes = rng.integers(1, oracle.graph.n_nodes, n)
    return [Request(arrival, int(i), float(rng.uniform(2.0, 15.0)), first_id + k) for k, i in enumerate(nodes)]


def random_routing(rng, oracle, max_requests=6, horizon=HORIZON):
    """A vehicle part-way along a feasible route, and the current time."""
    while True:
        n = int(rng.integers(1, max_requests + 1))
        reqs = random_requests(rng, oracle, n)
        route = route_through(oracle, [(q.node, (q,)) for q in reqs])
        if route.duration < horizon:
            break
    start = float(rng.uniform(0.0, horizon - route.duration))
    now = float(start + rng.uniform(0.0, route.arrival_offsets[-1]))
    return Routing(start, route), now


def replay_at_speed(v, now, speed, graph):
    """Departure times from each onward position when the rest of the route
    is driven at ``speed`` (meters/minute) with unchanged service times."""
    r = v.route
    rep = locate(v, now)
    length = graph.arc_length
    if rep.status == "in_transit":
        p = rep.position
        meters = (1 - rep.fraction) * length[(r.nodes[p], r.nodes[p + 1])]
        t = now + meters / speed
        first = p + 1
        t += sum(q.duration for q in r.serve[first])
    else:
        first = rep.position
        t = now + sum(q.duration for q in r.serve[first]) - rep.elapsed
    out = [(r.nodes[first], t)]
    for p in range(first + 1, len(r.nodes)):
        t += length[(r.nodes[p - 1], r.nodes[p])] / speed + sum(q.duration for q in r.serve[p])
        out.append((r.nodes[p], t))
    return out
