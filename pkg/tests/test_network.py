import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dvrpsr.network import (
    GraphError,
    StreetGraph,
    TravelTimeOracle,
    generate_grid,
    kmh_to_m_per_min,
    load_graph,
    save_graph,
)
from oracles import dijkstra_times, reachable


def _write(tmp_path, data):
    p = tmp_path / "g.json"
    p.write_text(json.dumps(data))
    return p


def test_two_node_cycle_loads(tmp_path):
    p = _write(tmp_path, {
        "nodes": [{"id": 0, "x": 0, "y": 0}, {"id": 1, "x": 1000, "y": 0}],
        "arcs": [{"from": 0, "to": 1, "len_m": 1000}, {"from": 1, "to": 0, "len_m": 1000}],
        "depot": 0,
    })
    g = load_graph(p)
    assert g.n_nodes == 2 and g.n_arcs == 2


def test_isolated_node_is_rejected_and_named(tmp_path):
    p = _write(tmp_path, {
        "nodes": [{"id": 0, "x": 0, "y": 0}, {"id": 1, "x": 1, "y": 0}, {"id": 2, "x": 5, "y": 5}],
        "arcs": [{"from": 0, "to": 1, "len_m": 1}, {"from": 1, "to": 0, "len_m": 1}],
        "depot": 0,
    })
    with pytest.raises(GraphError, match="2"):
        load_graph(p)


@pytest.mark.parametrize("length", [0.0, -3.0])
def test_nonpositive_arc_length_is_rejected(tmp_path, length):
    p = _write(tmp_path, {
        "nodes": [{"id": 0, "x": 0, "y": 0}, {"id": 1, "x": 1, "y": 0}],
        "arcs": [{"from": 0, "to": 1, "len_m": length}, {"from": 1, "to": 0, "len_m": 1}],
        "depot": 0,
    })
    with pytest.raises(GraphError):
        load_graph(p)


def test_malformed_file_is_rejected(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(GraphError):
        load_graph(p)


def test_grid_counts_and_connectivity():
    g = generate_grid(20, 20, 800, seed=3, jitter=0.1)
    assert g.n_nodes == 400
    # 2 * (rows * (cols - 1) + cols * (rows - 1)) directed arcs
    assert g.n_arcs == 2 * (20 * 19 + 20 * 19) == 1520
    assert len(reachable(g, 0)) == 400
    assert len(reachable(g, 0, reverse=True)) == 400


def test_small_grid_and_determinism():
    g = generate_grid(2, 2, 100)
    assert g.n_nodes == 4 and g.n_arcs == 8
    a, b = generate_grid(5, 4, 500, seed=9, jitter=0.1), generate_grid(5, 4, 500, seed=9, jitter=0.1)
    assert np.array_equal(a.lengths, b.lengths) and np.array_equal(a.tails, b.tails)
    assert np.all(a.lengths >= 450 - 1e-9) and np.all(a.lengths <= 550 + 1e-9)


def test_graph_json_round_trip(tmp_path):
    g = generate_grid(4, 3, 250, seed=1, jitter=0.1)
    save_graph(g, tmp_path / "g.json")
    h = load_graph(tmp_path / "g.json")
    assert np.allclose(g.xy, h.xy)
    assert sorted(g.arc_length.items()) == sorted(h.arc_length.items())


def test_single_arc_travel_time():
    g = StreetGraph(np.array([[0.0, 0.0], [1000.0, 0.0]]), np.array([0, 1]), np.array([1, 0]),
                    np.array([1000.0, 1000.0]), 0)
    o = TravelTimeOracle(g, kmh_to_m_per_min(20.0))
    assert o.travel_time(0, 1) == pytest.approx(3.0, abs=1e-12)
    assert o.travel_time(1, 1) == 0.0
    assert o.fastest_path(0, 1) == [0, 1]
    assert o.fastest_path(1, 1) == [1]


@pytest.mark.parametrize("cache,dense", [(0, 2500), (8, 0), (1024, 2500)])
def test_travel_times_match_reference_dijkstra(cache, dense):
    g = generate_grid(9, 7, 600, seed=5, jitter=0.1)
    speed = kmh_to_m_per_min(20.0)
    o = TravelTimeOracle(g, speed, cache_size=cache, dense_limit=dense)
    rng = np.random.default_rng(0)
    refs = {}
    for _ in range(200):
        i, j = (int(x) for x in rng.integers(0, g.n_nodes, 2))
        if i not in refs:
            refs[i] = dijkstra_times(g, i, speed)
        assert abs(o.travel_time(i, j) - refs[i][j]) <= 1e-9


def test_fastest_path_realizes_travel_time():
    g = generate_grid(6, 6, 700, seed=2, jitter=0.1)
    o = TravelTimeOracle(g, 300.0)
    rng = np.random.default_rng(1)
    for _ in range(50):
        i, j = (int(x) for x in rng.integers(0, g.n_nodes, 2))
        path = o.fastest_path(i, j)
        assert path[0] == i and path[-1] == j
        assert o.path_time(path) == pytest.approx(o.travel_time(i, j), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.integers(0, 29), min_size=3, max_size=3))
def test_triangle_inequality(seed, triple):
    g = generate_grid(5, 6, 400, seed=seed, jitter=0.1)
    o = TravelTimeOracle(g, 250.0)
    i, j, k = triple
    assert o.travel_time(i, k) <= o.travel_time(i, j) + o.travel_time(j, k) + 1e-9
    assert o.travel_time(i, j) >= 0


def test_matrix_helpers_agree_with_pointwise_queries():
    g = generate_grid(5, 5, 500, seed=4, jitter=0.1)
    nodes = [0, 3, 17, 24]
    for cache, dense in ((0, 2500), (4, 0), (1024, 2500)):
        o = TravelTimeOracle(g, 300.0, cache_size=cache, dense_limit=dense)
        M = o.matrix(nodes)
        R = o.round_trip_rows(nodes)
        for a, i in enumerate(nodes):
            for b, j in enumerate(nodes):
                assert M[a, b] == pytest.approx(o.travel_time(i, j), abs=1e-12)
            for v in range(g.n_nodes):
                assert R[a, v] == pytest.approx(o.travel_time(i, v) + o.travel_time(v, i), abs=1e-12)


def test_concurrent_queries_match_serial():
    from concurrent.futures import ThreadPoolExecutor

    g = generate_grid(8, 8, 500, seed=6, jitter=0.1)
    serial = TravelTimeOracle(g, 300.0, cache_size=4, dense_limit=0)
    shared = TravelTimeOracle(g, 300.0, cache_size=4, dense_limit=0)
    pairs = [(i % 64, (7 * i) % 64) for i in range(300)]
    want = [serial.travel_time(i, j) for i, j in pairs]
    with ThreadPoolExecutor(4) as ex:
        got = list(ex.map(lambda p: shared.travel_time(*p), pairs))
    assert got == want
