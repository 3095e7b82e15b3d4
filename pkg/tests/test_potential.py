import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dvrpsr.demand import Request, SamplePath
from dvrpsr.potential import (
    KnapsackInstance,
    PotentialModel,
    _solve_ka_many,
    alpha_ratio,
    estimate_potential_ka,
    estimate_potential_mka,
    route_potential_coefficient,
    solve_ka,
    solve_mka,
)
from dvrpsr.routes import Routing, insertion_cost, route_through, vehicle_budget

import oracles
from factories import HORIZON, grid_oracle, random_routing


@pytest.fixture(scope="module")
def oracle():
    return grid_oracle()


def random_path(rng, oracle, now, n=None, horizon=HORIZON):
    n = int(rng.integers(0, 12)) if n is None else n
    times = np.sort(rng.uniform(now, horizon, n))
    nodes = rng.integers(1, oracle.graph.n_nodes, n)
    durations = rng.uniform(2.0, 15.0, n)
    return SamplePath(now, horizon, times, nodes, durations)


def path_costs(v, now, path, oracle):
    return np.array([insertion_cost(v, now, q, oracle, HORIZON) for q in path.requests])


# -- single knapsack --------------------------------------------------------


def test_ka_examples():
    assert solve_ka(6.0, [2, 3, 5]) == pytest.approx(2.2)
    assert solve_ka(0.0, [2, 3, 5]) == 0.0
    assert solve_ka(10.0, [4]) == 1.0
    assert solve_ka(5.0, []) == 0.0
    assert solve_ka(5.0, [np.inf, 5.0]) == 1.0


def test_ka_matches_lp_on_random_knapsacks():
    rng = np.random.default_rng(1)
    for _ in range(500):
        costs = rng.uniform(0.5, 20.0, int(rng.integers(1, 15)))
        cap = float(rng.uniform(0.0, costs.sum() * 1.2))
        assert solve_ka(cap, costs) == pytest.approx(oracles.knapsack_lp(cap, costs), abs=1e-9)


def test_ka_batched_matches_single():
    rng = np.random.default_rng(2)
    for _ in range(50):
        sizes = rng.integers(0, 8, int(rng.integers(1, 6)))
        costs = rng.uniform(1.0, 30.0, sizes.sum())
        costs[rng.random(costs.size) < 0.2] = np.inf
        offsets = np.r_[0, np.cumsum(sizes)]
        cap = float(rng.uniform(0, 60))
        got = _solve_ka_many(cap, costs, offsets)
        want = [solve_ka(cap, costs[a:b]) for a, b in zip(offsets[:-1], offsets[1:])]
        np.testing.assert_allclose(got, want, atol=1e-12)


# -- multiple knapsack ------------------------------------------------------


def test_mka_examples():
    assert solve_mka(KnapsackInstance([1.0, 1.0], [[1.0], [1.0]])).value == pytest.approx(1.0)
    assert solve_mka(KnapsackInstance([3.0, 4.0], np.zeros((2, 0)))).value == 0.0
    costs = [2.0, 3.0, 5.0]
    assert solve_mka(KnapsackInstance([6.0], [costs])).value == pytest.approx(solve_ka(6.0, costs))


def test_knapsack_instance_validation():
    with pytest.raises(ValueError):
        KnapsackInstance([-1.0], [[1.0]])
    with pytest.raises(ValueError):
        KnapsackInstance([1.0], [[0.0]])


def random_mka(rng, max_vehicles=3, max_items=6):
    m = int(rng.integers(1, max_vehicles + 1))
    n = int(rng.integers(1, max_items + 1))
    costs = rng.uniform(1.0, 10.0, (m, n))
    costs[rng.random((m, n)) < 0.15] = np.inf
    caps = rng.uniform(0.0, 15.0, m)
    return caps, costs


def test_mka_matches_dual_vertex_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(60):
        caps, costs = random_mka(rng)
        got = solve_mka(KnapsackInstance(caps, costs)).value
        assert got == pytest.approx(oracles.mka_dual_vertices(caps, costs), abs=1e-7)


def test_mka_matches_reference_lp_and_integrality_gap():
    rng = np.random.default_rng(4)
    for _ in range(100):
        caps, costs = random_mka(rng)
        res = solve_mka(KnapsackInstance(caps, costs))
        A, b, bounds = oracles.mka_matrices(caps, costs)
        assert res.value == pytest.approx(oracles.lp_max(np.ones(A.shape[1]), A, b, bounds), abs=1e-7)
        gap = res.value - oracles.mka_ilp(caps, costs)
        assert -1e-9 <= gap <= len(caps) + 1e-9


def test_mka_weights_are_feasible():
    rng = np.random.default_rng(5)
    for _ in range(100):
        caps, costs = random_mka(rng)
        res = solve_mka(KnapsackInstance(caps, costs))
        w = res.weights
        assert np.all(w >= -1e-9) and np.all(w <= 1 + 1e-9)
        assert np.all(w[~np.isfinite(costs)] == 0)
        used = np.where(np.isfinite(costs), costs, 0.0) * w
        assert np.all(used.sum(axis=1) <= caps + 1e-7)
        assert np.all(w.sum(axis=0) <= 1 + 1e-7)
        assert w.sum() == pytest.approx(res.value, abs=1e-7)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 20.0))
def test_mka_monotone_in_capacity(seed, extra):
    rng = np.random.default_rng(seed)
    caps, costs = random_mka(rng)
    base = solve_mka(KnapsackInstance(caps, costs)).value
    k = int(rng.integers(0, caps.size))
    bigger = caps.copy()
    bigger[k] += extra
    assert solve_mka(KnapsackInstance(bigger, costs)).value >= base - 1e-9
    assert 0.0 <= base <= costs.shape[1] + 1e-9


# -- estimates on fleet states ----------------------------------------------


def test_mka_estimate_single_vehicle_is_knapsack(oracle):
    rng = np.random.default_rng(6)
    for _ in range(10):
        v, now = random_routing(rng, oracle)
        path = random_path(rng, oracle, now)
        est = estimate_potential_mka([v], now, [path], oracle, HORIZON)
        want = solve_ka(max(vehicle_budget(v, HORIZON), 0.0), path_costs(v, now, path, oracle))
        assert est.H == 1
        assert est.value == pytest.approx(want, abs=1e-9)


def test_mka_estimate_matches_hand_built_instance(oracle):
    rng = np.random.default_rng(7)
    for _ in range(15):
        v1, now = random_routing(rng, oracle)
        v2 = Routing(now - float(rng.uniform(0, 30)), random_routing(rng, oracle)[0].route)
        path = random_path(rng, oracle, now, n=4)
        fleet = [v1, None, v2]
        est = estimate_potential_mka(fleet, now, [path], oracle, HORIZON)
        caps = [max(vehicle_budget(v, HORIZON), 0.0) for v in (v1, v2)]
        costs = np.array([path_costs(v, now, path, oracle) for v in (v1, v2)])
        if not np.isfinite(costs).any() or max(caps) == 0:
            assert est.value == 0.0
            continue
        assert est.value == pytest.approx(oracles.mka_dual_vertices(caps, costs), abs=1e-7)


def test_estimates_are_zero_without_budget(oracle):
    route = route_through(oracle, [(40, (Request(0.0, 40, 5.0, 0),))])
    v = Routing(HORIZON - route.duration, route)  # returns exactly at the horizon
    now = v.start + 1.0
    path = random_path(np.random.default_rng(8), oracle, now, n=6)
    assert vehicle_budget(v, HORIZON) == pytest.approx(0.0, abs=1e-9)
    assert estimate_potential_mka([v], now, [path], oracle, HORIZON).value == 0.0
    assert estimate_potential_mka([None, None], now, [path], oracle, HORIZON).value == 0.0


def test_estimate_bounds_and_determinism(oracle):
    rng = np.random.default_rng(9)
    for _ in range(10):
        fleet = []
        v, now = random_routing(rng, oracle)
        fleet.append(v)
        fleet.append(Routing(now - 5.0, random_routing(rng, oracle)[0].route))
        paths = [random_path(rng, oracle, now) for _ in range(6)]
        a = estimate_potential_mka(fleet, now, paths, oracle, HORIZON)
        b = estimate_potential_mka(fleet, now, paths, oracle, HORIZON)
        np.testing.assert_array_equal(a.per_path, b.per_path)
        assert a.value == pytest.approx(a.per_path.mean())
        assert np.all(a.per_path >= 0)
        assert np.all(a.per_path <= [len(p) + 1e-9 for p in paths])
        k = estimate_potential_ka(fleet, fleet, now, paths, oracle, HORIZON)
        assert 0 <= k.value <= np.mean([len(p) for p in paths]) + 1e-9


def test_alpha_examples(oracle):
    rng = np.random.default_rng(10)
    v, now = random_routing(rng, oracle)
    path = random_path(rng, oracle, now)
    assert alpha_ratio([v], now, path, oracle, HORIZON) == 1.0
    empty = random_path(rng, oracle, now, n=0)
    w = Routing(v.start, v.route)
    assert alpha_ratio([v, w], now, empty, oracle, HORIZON) == 1.0
    with pytest.raises(ValueError):
        alpha_ratio([None], now, path, oracle, HORIZON)


def test_alpha_half_for_two_identical_vehicles(oracle):
    req = Request(0.0, 9, 5.0, 0)
    route = route_through(oracle, [(req.node, (req,))])
    a, b = Routing(0.0, route), Routing(0.0, route)
    # one future request next to the depot, cheap for both
    path = SamplePath(0.0, HORIZON, np.array([1.0]), np.array([1]), np.array([3.0]))
    cost = insertion_cost(a, 0.0, path.requests[0], oracle, HORIZON)
    assert cost < vehicle_budget(a, HORIZON)
    assert alpha_ratio([a, b], 0.0, path, oracle, HORIZON) == pytest.approx(0.5)


def test_alpha_in_unit_interval(oracle):
    rng = np.random.default_rng(11)
    for _ in range(20):
        v, now = random_routing(rng, oracle)
        fleet = [v, Routing(now, random_routing(rng, oracle)[0].route), None]
        a = alpha_ratio(fleet, now, random_path(rng, oracle, now), oracle, HORIZON)
        assert 0.0 <= a <= 1.0 + 1e-12


def test_ka_estimate_by_hand(oracle):
    rng = np.random.default_rng(12)
    for _ in range(10):
        v1, now = random_routing(rng, oracle)
        v2 = Routing(now - 3.0, random_routing(rng, oracle)[0].route)
        before = [v1, v2]
        # a decision that replaces vehicle 1 with a new route; alpha stays at the
        # pre-decision fleet
        v1_new = Routing(now, random_routing(rng, oracle)[0].route)
        after = [v1_new, v2]
        paths = [random_path(rng, oracle, now) for _ in range(4)]
        want = []
        for p in paths:
            singles_before = [solve_ka(max(vehicle_budget(v, HORIZON), 0), path_costs(v, now, p, oracle)) for v in before]
            caps = [max(vehicle_budget(v, HORIZON), 0) for v in before]
            costs = np.array([path_costs(v, now, p, oracle) for v in before]) if len(p) else np.zeros((2, 0))
            num = solve_mka(KnapsackInstance(caps, costs)).value
            alpha = num / sum(singles_before) if sum(singles_before) > 0 else 1.0
            singles_after = [solve_ka(max(vehicle_budget(v, HORIZON), 0), path_costs(v, now, p, oracle)) for v in after]
            want.append(alpha * sum(singles_after))
        got = estimate_potential_ka(before, after, now, paths, oracle, HORIZON)
        np.testing.assert_allclose(got.per_path, want, atol=1e-9)


def test_ka_estimate_single_vehicle_equals_mka(oracle):
    rng = np.random.default_rng(13)
    v, now = random_routing(rng, oracle)
    paths = [random_path(rng, oracle, now) for _ in range(5)]
    a = estimate_potential_ka([v], [v], now, paths, oracle, HORIZON)
    b = estimate_potential_mka([v], now, paths, oracle, HORIZON)
    np.testing.assert_allclose(a.per_path, b.per_path, atol=1e-12)


def test_model_shares_work_between_candidates(oracle):
    rng = np.random.default_rng(14)
    v, now = random_routing(rng, oracle)
    w = Routing(now, random_routing(rng, oracle)[0].route)
    model = PotentialModel(oracle, HORIZON, now, [random_path(rng, oracle, now, n=5) for _ in range(3)])
    model.estimate_mka([v, w])
    solves = model.lp_solves
    model.estimate_mka([v, w])
    assert model.lp_solves == 2 * solves  # LP values are not cached, rows are
    assert len(model._rows) == 2


# -- route coefficients -----------------------------------------------------


def test_route_coefficient(oracle):
    rng = np.random.default_rng(15)
    from dvrpsr.routes import Route

    paths = [random_path(rng, oracle, 0.0) for _ in range(4)]
    assert route_potential_coefficient(Route.trivial(), paths, oracle, HORIZON) == 0.0
    req = Request(0.0, 30, 5.0, 0)
    route = route_through(oracle, [(req.node, (req,))])
    v = Routing(0.0, route)
    want = np.mean([solve_ka(vehicle_budget(v, HORIZON), path_costs(v, 0.0, p, oracle)) for p in paths])
    assert route_potential_coefficient(route, paths, oracle, HORIZON) == pytest.approx(want)


def test_route_coefficient_monotone_in_horizon(oracle):
    rng = np.random.default_rng(16)
    for _ in range(20):
        v, _ = random_routing(rng, oracle)
        paths = [random_path(rng, oracle, 0.0) for _ in range(3)]
        small = route_potential_coefficient(v.route, paths, oracle, HORIZON)
        large = route_potential_coefficient(v.route, paths, oracle, HORIZON + 60.0)
        assert large >= small - 1e-9
