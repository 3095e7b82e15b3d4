"""Street-network graph, fastest-path travel times and synthetic grid instances.

Units are canonical throughout: meters, minutes and meters/minute.
"""

from __future__ import annotations

import json
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra


class GraphError(ValueError):
    """Raised for malformed or invalid street-network graphs."""


@dataclass(frozen=True, eq=False)
class StreetGraph:
    """Directed street network with planar node coordinates.

    Arcs are stored as parallel arrays. Parallel arcs between the same
    pair of nodes are allowed in input; only the shortest one matters for
    routing.
    """

    xy: np.ndarray  # (V+1, 2) meters
    tails: np.ndarray
    heads: np.ndarray
    lengths: np.ndarray  # meters
    depot: int = 0

    @property
    def n_nodes(self) -> int:
        return int(self.xy.shape[0])

    @property
    def n_arcs(self) -> int:
        return int(self.tails.shape[0])

    @cached_property
    def arc_length(self) -> dict[tuple[int, int], float]:
        out: dict[tuple[int, int], float] = {}
        for u, v, d in zip(self.tails.tolist(), self.heads.tolist(), self.lengths.tolist()):
            if (u, v) not in out or d < out[(u, v)]:
                out[(u, v)] = d
        return out

    @cached_property
    def customer_nodes(self) -> np.ndarray:
        """All nodes except the depot."""
        nodes = np.arange(self.n_nodes)
        return nodes[nodes != self.depot]

    def validate(self) -> None:
        n = self.n_nodes
        if n < 2:
            raise GraphError("graph needs at least two nodes")
        if not 0 <= self.depot < n:
            raise GraphError(f"depot {self.depot} is not a node")
        if self.n_arcs == 0:
            raise GraphError("graph has no arcs")
        if self.tails.min() < 0 or self.heads.min() < 0 or max(self.tails.max(), self.heads.max()) >= n:
            raise GraphError("arc endpoint outside node range")
        bad = np.flatnonzero(~(self.lengths > 0))
        if bad.size:
            k = int(bad[0])
            raise GraphError(
                f"non-positive arc length {self.lengths[k]} on arc "
                f"({self.tails[k]}, {self.heads[k]})"
            )
        if np.any(self.tails == self.heads):
            raise GraphError("self-loop arcs are not allowed")
        mat = self._adjacency()
        fwd = dijkstra(mat, indices=self.depot, unweighted=True)
        bwd = dijkstra(mat.T.tocsr(), indices=self.depot, unweighted=True)
        for dist, word in ((fwd, "from"), (bwd, "to")):
            unreachable = np.flatnonzero(~np.isfinite(dist))
            if unreachable.size:
                raise GraphError(
                    f"graph is not strongly connected: node {int(unreachable[0])} "
                    f"is unreachable {word} the depot"
                )

    def _adjacency(self, weights: np.ndarray | None = None) -> csr_matrix:
        # csr_matrix sums duplicates, so collapse parallel arcs to their minimum first
        keys = self.tails.astype(np.int64) * self.n_nodes + self.heads
        w = self.lengths if weights is None else weights
        order = np.lexsort((w, keys))
        keys_sorted = keys[order]
        first = np.ones(order.size, dtype=bool)
        first[1:] = keys_sorted[1:] != keys_sorted[:-1]
        keep = order[first]
        return csr_matrix(
            (w[keep], (self.tails[keep], self.heads[keep])),
            shape=(self.n_nodes, self.n_nodes),
        )

    def to_json(self) -> dict:
        return {
            "nodes": [
                {"id": i, "x": float(x), "y": float(y)} for i, (x, y) in enumerate(self.xy)
            ],
            "arcs": [
                {"from": int(u), "to": int(v), "len_m": float(d)}
                for u, v, d in zip(self.tails, self.heads, self.lengths)
            ],
            "depot": int(self.depot),
        }

    @classmethod
    def from_json(cls, data: dict) -> "StreetGraph":
        try:
            nodes = sorted(data["nodes"], key=lambda n: int(n["id"]))
            ids = [int(n["id"]) for n in nodes]
            if ids != list(range(len(ids))):
                raise GraphError("node ids must be dense in [0, V]")
            xy = np.array([[float(n["x"]), float(n["y"])] for n in nodes], dtype=float)
            arcs = data["arcs"]
            tails = np.array([int(a["from"]) for a in arcs], dtype=np.int64)
            heads = np.array([int(a["to"]) for a in arcs], dtype=np.int64)
            lengths = np.array([float(a["len_m"]) for a in arcs], dtype=float)
            depot = int(data.get("depot", 0))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, GraphError):
                raise
            raise GraphError(f"malformed graph JSON: {exc}") from exc
        graph = cls(xy.reshape(-1, 2), tails, heads, lengths, depot)
        graph.validate()
        return graph


def load_graph(path: str | Path) -> StreetGraph:
    """Read and validate a graph JSON file."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise GraphError(f"cannot parse {path}: {exc}") from exc
    return StreetGraph.from_json(data)


def save_graph(graph: StreetGraph, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(graph.to_json(), fh)


def generate_grid(
    rows: int,
    cols: int,
    spacing: float,
    seed: int | None = 0,
    jitter: float = 0.0,
    depot: str = "southeast",
) -> StreetGraph:
    """Bidirectional rectangular grid.

    Node ``r * cols + c`` sits at ``(c * spacing, r * spacing)``; row 0 is the
    southern edge. ``jitter`` perturbs each arc length by a uniform factor in
    ``[1 - jitter, 1 + jitter]`` (use 0.1 for +-10%). The depot is placed at
    the named corner or at the center node and relabelled to id 0.
    """
    if rows < 2 or cols < 2:
        raise GraphError("grid needs at least 2 rows and 2 columns")
    rng = np.random.default_rng(seed)
    n = rows * cols
    rr, cc = np.divmod(np.arange(n), cols)
    xy = np.column_stack([cc * spacing, rr * spacing]).astype(float)

    pairs = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                pairs.append((i, i + 1))
            if r + 1 < rows:
                pairs.append((i, i + cols))
    pairs = np.array(pairs, dtype=np.int64)
    base = np.full(len(pairs), float(spacing))
    # one length per direction so jittered grids are slightly asymmetric
    fwd = base * (1.0 + jitter * rng.uniform(-1.0, 1.0, len(pairs))) if jitter else base
    bwd = base * (1.0 + jitter * rng.uniform(-1.0, 1.0, len(pairs))) if jitter else base
    tails = np.concatenate([pairs[:, 0], pairs[:, 1]])
    heads = np.concatenate([pairs[:, 1], pairs[:, 0]])
    lengths = np.concatenate([fwd, bwd])

    corners = {
        "southwest": 0,
        "southeast": cols - 1,
        "northwest": (rows - 1) * cols,
        "northeast": rows * cols - 1,
        "center": (rows // 2) * cols + cols // 2,
    }
    try:
        d = corners[depot]
    except KeyError:
        raise GraphError(f"unknown depot position {depot!r}") from None
    # swap labels of node d and node 0
    perm = np.arange(n)
    perm[[0, d]] = perm[[d, 0]]
    graph = StreetGraph(xy[perm], perm[tails], perm[heads], lengths, 0)
    graph.validate()
    return graph


@dataclass
class _Tree:
    dist: np.ndarray
    pred: np.ndarray


@dataclass
class TravelTimeOracle:
    """Fastest-path travel times at a fixed vehicle speed.

    Single-source shortest-path trees are computed on demand and kept in an
    LRU cache keyed by source node (forward trees) or target node (reverse
    trees). Setting ``cache_size=0`` disables caching. Graphs with at most
    ``dense_limit`` nodes get a full time matrix on first use instead, which
    is cheaper than per-source trees at that size.
    """

    graph: StreetGraph
    speed: float  # meters / minute
    cache_size: int = 1024
    dense_limit: int = 2500
    _fwd: OrderedDict = field(default_factory=OrderedDict, init=False, repr=False)
    _bwd: OrderedDict = field(default_factory=OrderedDict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.speed > 0:
            raise ValueError("speed must be positive")
        times = self.graph.lengths / self.speed
        self._mat = self.graph._adjacency(times)
        self._mat_t = self._mat.T.tocsr()
        self._dense = None
        self._dense_t = None

    @property
    def uses_dense(self) -> bool:
        return self.cache_size > 0 and self.graph.n_nodes <= self.dense_limit

    def all_pairs(self) -> np.ndarray:
        """Full matrix ``T[i, j] = t(i, j)`` (computed once, read-only)."""
        if self._dense is None:
            with self._lock:
                if self._dense is None:
                    dense = dijkstra(self._mat)
                    dense.setflags(write=False)
                    dense_t = np.ascontiguousarray(dense.T)
                    dense_t.setflags(write=False)
                    self._dense_t = dense_t
                    self._dense = dense
        return self._dense

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_fwd"] = OrderedDict()
        state["_bwd"] = OrderedDict()
        state["_dense"] = state["_dense_t"] = None
        del state["_lock"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    def arc_time(self, i: int, j: int) -> float:
        return self.graph.arc_length[(i, j)] / self.speed

    def _tree(self, node: int, reverse: bool) -> _Tree:
        cache = self._bwd if reverse else self._fwd
        with self._lock:
            tree = cache.get(node)
            if tree is not None:
                cache.move_to_end(node)
                return tree
        mat = self._mat_t if reverse else self._mat
        dist, pred = dijkstra(mat, indices=node, return_predecessors=True)
        dist.setflags(write=False)
        tree = _Tree(dist, pred)
        if self.cache_size > 0:
            with self._lock:
                cache[node] = tree
                while len(cache) > self.cache_size:
                    cache.popitem(last=False)
        return tree

    def times_from(self, i: int) -> np.ndarray:
        """``t(i, j)`` for every node j."""
        if self.uses_dense:
            return self.all_pairs()[int(i)]
        return self._tree(int(i), False).dist

    def times_to(self, j: int) -> np.ndarray:
        """``t(i, j)`` for every node i."""
        if self.uses_dense:
            self.all_pairs()
            return self._dense_t[int(j)]
        return self._tree(int(j), True).dist

    def travel_time(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        return float(self.times_from(i)[j])

    def round_trip(self, i: int) -> np.ndarray:
        """``t(j, i) + t(i, j)`` for every node j."""
        return self.times_from(i) + self.times_to(i)

    def round_trip_rows(self, nodes) -> np.ndarray:
        """Matrix ``R[q, v] = t(nodes[q], v) + t(v, nodes[q])``."""
        nodes = np.asarray(nodes, dtype=np.int64)
        if self.uses_dense:
            T = self.all_pairs()
            return T[nodes] + self._dense_t[nodes]
        out = np.empty((nodes.size, self.graph.n_nodes))
        for q, j in enumerate(nodes.tolist()):
            out[q] = self.round_trip(j)
        return out

    def round_trip_columns(self, targets) -> np.ndarray:
        """Matrix ``R[j, c] = t(j, targets[c]) + t(targets[c], j)``."""
        targets = np.asarray(targets, dtype=np.int64)
        out = np.empty((self.graph.n_nodes, targets.size))
        cache: dict[int, np.ndarray] = {}
        for c, i in enumerate(targets.tolist()):
            col = cache.get(i)
            if col is None:
                col = cache[i] = self.round_trip(i)
            out[:, c] = col
        return out

    def fastest_path(self, i: int, j: int) -> list[int]:
        """Node sequence of a fastest path from i to j (inclusive)."""
        i, j = int(i), int(j)
        if i == j:
            return [i]
        pred = self._tree(i, False).pred
        path = [j]
        while path[-1] != i:
            p = int(pred[path[-1]])
            if p < 0:
                raise GraphError(f"no path from {i} to {j}")
            path.append(p)
        path.reverse()
        return path

    def path_time(self, path) -> float:
        return sum(self.arc_time(a, b) for a, b in zip(path[:-1], path[1:]))

    def matrix(self, nodes) -> np.ndarray:
        """Travel-time matrix restricted to ``nodes`` (rows: from, cols: to)."""
        nodes = np.asarray(nodes, dtype=np.int64)
        if self.uses_dense:
            return self.all_pairs()[np.ix_(nodes, nodes)]
        return np.stack([self.times_from(i)[nodes] for i in nodes.tolist()]) if nodes.size else np.zeros((0, 0))


def kmh_to_m_per_min(kmh: float) -> float:
    return kmh * 1000.0 / 60.0
