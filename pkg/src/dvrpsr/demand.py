"""Requests, node request rates and sample paths of the arrival process."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .network import StreetGraph

PATTERNS = ("UTI", "CTI", "CTD")


@dataclass(frozen=True)
class Request:
    """A service request ``(arrival, node, duration)``.

    ``id`` is unique within a scenario; sampled future requests use -1.
    """

    arrival: float
    node: int
    duration: float
    id: int = -1

    def to_json(self) -> dict:
        return {"id": self.id, "arrival": self.arrival, "node": self.node, "duration": self.duration}

    @classmethod
    def from_json(cls, d: dict) -> "Request":
        return cls(float(d["arrival"]), int(d["node"]), float(d["duration"]), int(d["id"]))


@dataclass(frozen=True)
class Cluster:
    """A circular demand cluster whose share of the total rate moves
    linearly from ``share_start`` at u=0 to ``share_end`` at u=U."""

    center: int
    radius: float  # meters
    share_start: float
    share_end: float

    def share(self, u, horizon: float):
        w = np.clip(np.asarray(u, dtype=float) / horizon, 0.0, 1.0)
        return self.share_start + (self.share_end - self.share_start) * w


@dataclass(frozen=True)
class DurationLaw:
    mean: float = 10.0
    stddev: float = 2.5
    floor: float = 0.5

    def __post_init__(self):
        if not self.mean > self.floor >= 0:
            raise ValueError("duration law needs mean > floor >= 0")
        if self.stddev < 0:
            raise ValueError("negative duration stddev")


@dataclass(frozen=True)
class DemandSpec:
    rate: float  # requests per minute (overall, constant)
    horizon: float  # minutes
    pattern: str = "UTI"
    clusters: tuple[Cluster, ...] = ()
    duration_law: DurationLaw = field(default_factory=DurationLaw)
    static_count: float = 0.0  # expected number of static requests

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("overall request rate must be positive")
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown demand pattern {self.pattern!r}")
        for u in (0.0, self.horizon):
            total = sum(float(c.share(u, self.horizon)) for c in self.clusters)
            if total > 1.0 + 1e-12 or any(float(c.share(u, self.horizon)) < 0 for c in self.clusters):
                raise ValueError("cluster shares must lie in [0, 1] and sum to at most 1")
        if self.static_count < 0:
            raise ValueError("static_count must be nonnegative")

    @classmethod
    def from_pattern(
        cls,
        graph: StreetGraph,
        rate: float,
        horizon: float,
        pattern: str = "UTI",
        dynamism: float | None = None,
        static_count: float | None = None,
        radius: float = 3000.0,
        clustered_share: float = 0.5,
        duration_law: DurationLaw | None = None,
    ) -> "DemandSpec":
        """Build one of the three standard patterns on ``graph``.

        Clusters are centered on the nodes nearest to the north-east and
        south-west quarter points of the bounding box. When ``dynamism`` is
        given, the expected static count follows from
        ``E[T] (1 - eta) / eta`` with ``E[T] = rate * horizon``.
        """
        if static_count is None:
            if dynamism is None:
                static_count = 0.0
            else:
                if not 0 < dynamism <= 1:
                    raise ValueError("degree of dynamism must lie in (0, 1]")
                static_count = rate * horizon * (1.0 - dynamism) / dynamism
        clusters: tuple[Cluster, ...] = ()
        if pattern in ("CTI", "CTD"):
            lo, hi = graph.xy.min(axis=0), graph.xy.max(axis=0)
            ne = lo + 0.75 * (hi - lo)
            sw = lo + 0.25 * (hi - lo)
            ne_node = _nearest_customer(graph, ne)
            sw_node = _nearest_customer(graph, sw)
            half = clustered_share / 2.0
            if pattern == "CTI":
                clusters = (Cluster(ne_node, radius, half, half), Cluster(sw_node, radius, half, half))
            else:
                clusters = (
                    Cluster(ne_node, radius, 0.8 * clustered_share, 0.2 * clustered_share),
                    Cluster(sw_node, radius, 0.2 * clustered_share, 0.8 * clustered_share),
                )
        return cls(rate, horizon, pattern, clusters, duration_law or DurationLaw(), float(static_count))

    def to_json(self) -> dict:
        return {
            "rate": self.rate,
            "horizon": self.horizon,
            "pattern": self.pattern,
            "clusters": [
                {"center": c.center, "radius_m": c.radius, "share_start": c.share_start, "share_end": c.share_end}
                for c in self.clusters
            ],
            "duration": {
                "mean": self.duration_law.mean,
                "stddev": self.duration_law.stddev,
                "floor": self.duration_law.floor,
            },
            "static_count": self.static_count,
        }

    @classmethod
    def from_json(cls, d: dict) -> "DemandSpec":
        law = d.get("duration", {})
        return cls(
            rate=float(d["rate"]),
            horizon=float(d["horizon"]),
            pattern=d.get("pattern", "UTI"),
            clusters=tuple(
                Cluster(int(c["center"]), float(c["radius_m"]), float(c["share_start"]), float(c["share_end"]))
                for c in d.get("clusters", [])
            ),
            duration_law=DurationLaw(
                float(law.get("mean", 10.0)), float(law.get("stddev", 2.5)), float(law.get("floor", 0.5))
            ),
            static_count=float(d.get("static_count", 0.0)),
        )


def _nearest_customer(graph: StreetGraph, point) -> int:
    nodes = graph.customer_nodes
    d2 = ((graph.xy[nodes] - np.asarray(point)) ** 2).sum(axis=1)
    return int(nodes[int(np.argmin(d2))])


class DemandModel:
    """A :class:`DemandSpec` bound to a graph, with cluster membership
    resolved once."""

    def __init__(self, spec: DemandSpec, graph: StreetGraph):
        self.spec = spec
        self.graph = graph
        customers = graph.customer_nodes
        self.customers = customers
        self.members: list[np.ndarray] = []
        for c in spec.clusters:
            d = np.hypot(*(graph.xy[customers] - graph.xy[c.center]).T)
            members = customers[d <= c.radius]
            if members.size == 0:
                raise ValueError(f"cluster around node {c.center} contains no customer nodes")
            self.members.append(members)

    @cached_property
    def _membership(self) -> np.ndarray:
        # (clusters, V+1) indicator with per-member weight 1/|members|
        w = np.zeros((len(self.members), self.graph.n_nodes))
        for k, m in enumerate(self.members):
            w[k, m] = 1.0 / m.size
        return w

    def node_rate(self, i: int, u: float) -> float:
        return float(self.rates(u)[i])

    def rates(self, u: float) -> np.ndarray:
        """Vector of ``lambda_i(u)`` over all nodes (depot entry is 0)."""
        spec = self.spec
        if not 0.0 <= u <= spec.horizon:
            raise ValueError(f"time {u} outside the service period [0, {spec.horizon}]")
        shares = np.array([float(c.share(u, spec.horizon)) for c in spec.clusters])
        out = np.zeros(self.graph.n_nodes)
        out[self.customers] = (1.0 - shares.sum()) / self.customers.size
        if shares.size:
            out += shares @ self._membership
        return spec.rate * out

    def sample_nodes(self, times: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw one node per arrival time from ``lambda_.(u) / Lambda``."""
        spec = self.spec
        n = times.size
        if not self.members:
            return self.customers[rng.integers(0, self.customers.size, n)]
        shares = np.stack([c.share(times, spec.horizon) for c in spec.clusters], axis=1)
        cum = np.cumsum(shares, axis=1)
        pick = rng.random(n)
        comp = (pick[:, None] >= cum).sum(axis=1)  # == n_clusters -> uniform component
        slot = rng.random(n)
        nodes = np.empty(n, dtype=np.int64)
        uni = comp == len(self.members)
        nodes[uni] = self.customers[(slot[uni] * self.customers.size).astype(np.int64)]
        for k, members in enumerate(self.members):
            sel = comp == k
            nodes[sel] = members[(slot[sel] * members.size).astype(np.int64)]
        return nodes

    def sample_durations(self, n: int, rng: np.random.Generator) -> np.ndarray:
        law = self.spec.duration_law
        if law.stddev == 0:
            return np.full(n, law.mean)
        out = rng.normal(law.mean, law.stddev, n)
        bad = out <= law.floor
        while bad.any():
            out[bad] = rng.normal(law.mean, law.stddev, int(bad.sum()))
            bad = out <= law.floor
        return out

    def sample_duration(self, rng: np.random.Generator) -> float:
        return float(self.sample_durations(1, rng)[0])

    def sample_arrays(self, lo: float, hi: float, rng: np.random.Generator):
        """Arrival times, nodes and durations of one sample path on ``(lo, hi]``."""
        if not (0.0 <= lo <= hi <= self.spec.horizon):
            raise ValueError(f"invalid interval ({lo}, {hi}] for horizon {self.spec.horizon}")
        count = rng.poisson(self.spec.rate * (hi - lo)) if hi > lo else 0
        times = np.sort(hi - rng.random(count) * (hi - lo))  # uniform on (lo, hi]
        nodes = self.sample_nodes(times, rng)
        durations = self.sample_durations(count, rng)
        return times, nodes, durations

    def sample_path(self, lo: float, hi: float, rng: np.random.Generator, first_id: int = -1) -> "SamplePath":
        times, nodes, durations = self.sample_arrays(lo, hi, rng)
        return SamplePath(lo, hi, times, nodes, durations, first_id)

    def sample_static(self, rng: np.random.Generator, first_id: int = 0) -> list[Request]:
        count = rng.poisson(self.spec.static_count) if self.spec.static_count > 0 else 0
        nodes = self.customers[rng.integers(0, self.customers.size, count)]
        durations = self.sample_durations(count, rng)
        return [Request(0.0, int(n), float(d), first_id + k) for k, (n, d) in enumerate(zip(nodes, durations))]


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Time-ordered requests on the interval ``(lo, hi]``, stored as arrays."""

    lo: float
    hi: float
    times: np.ndarray
    nodes: np.ndarray
    durations: np.ndarray
    first_id: int = -1

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def requests(self) -> list[Request]:
        ids = (
            range(self.first_id, self.first_id + len(self))
            if self.first_id >= 0
            else [-1] * len(self)
        )
        return [
            Request(float(u), int(i), float(d), k)
            for u, i, d, k in zip(self.times, self.nodes, self.durations, ids)
        ]

    def after(self, u: float) -> "SamplePath":
        """The part of this path strictly after ``u``."""
        k = int(np.searchsorted(self.times, u, side="right"))
        return SamplePath(max(self.lo, u), self.hi, self.times[k:], self.nodes[k:], self.durations[k:], -1)


def node_rate(spec: DemandSpec, graph: StreetGraph, i: int, u: float) -> float:
    return DemandModel(spec, graph).node_rate(i, u)


def sample_path(spec: DemandSpec, graph: StreetGraph, interval, rng) -> SamplePath:
    lo, hi = interval
    return DemandModel(spec, graph).sample_path(lo, hi, rng)


def sample_static(spec: DemandSpec, graph: StreetGraph, rng) -> list[Request]:
    return DemandModel(spec, graph).sample_static(rng)


def sample_duration(spec: DemandSpec, rng) -> float:
    law = spec.duration_law
    if law.stddev == 0:
        return law.mean
    while True:
        d = rng.normal(law.mean, law.stddev)
        if d > law.floor:
            return float(d)
