"""Knapsack approximations of the expected number of future requests a fleet
can still accept, averaged over sample paths."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .demand import SamplePath
from .network import TravelTimeOracle
from .routes import Forecast, Route, Routing
from .solvers.lp import LinearProgram, solve_lp


@dataclass
class KnapsackInstance:
    """Vehicles are knapsacks with budget capacity; ``costs[k, r]`` is the
    budget vehicle ``k`` spends on item ``r`` (``inf`` if it cannot host it)."""

    capacities: np.ndarray
    costs: np.ndarray

    def __post_init__(self):
        self.capacities = np.asarray(self.capacities, dtype=float).ravel()
        self.costs = np.asarray(self.costs, dtype=float).reshape(self.capacities.size, -1)
        if np.any(self.capacities < 0):
            raise ValueError("knapsack capacities must be nonnegative")
        if np.any(~(self.costs > 0)):
            raise ValueError("item costs must be positive (or inf)")

    @property
    def n_items(self) -> int:
        return self.costs.shape[1]


def solve_ka(capacity: float, costs) -> float:
    """Continuous single knapsack with unit profits, solved greedily."""
    c = np.sort(np.asarray(costs, dtype=float).ravel())
    c = c[np.isfinite(c)]
    if capacity <= 0 or c.size == 0:
        return 0.0
    csum = np.cumsum(c)
    full = int(np.searchsorted(csum, capacity, side="right"))
    if full >= c.size:
        return float(c.size)
    used = csum[full - 1] if full else 0.0
    return full + (capacity - used) / c[full]


def _solve_ka_many(capacity: float, costs: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """:func:`solve_ka` on every segment ``costs[offsets[h]:offsets[h+1]]``."""
    H = offsets.size - 1
    out = np.zeros(H)
    if capacity <= 0 or costs.size == 0:
        return out
    seg = np.repeat(np.arange(H), np.diff(offsets))
    keep = np.isfinite(costs)
    seg, c = seg[keep], costs[keep]
    if c.size == 0:
        return out
    order = np.lexsort((c, seg))
    seg, c = seg[order], c[order]
    csum = np.cumsum(c)
    starts = np.searchsorted(seg, np.arange(H))
    base = np.where(starts > 0, csum[np.maximum(starts - 1, 0)], 0.0)
    used = csum - base[seg]  # running total within each segment
    fits = used <= capacity
    full = np.bincount(seg[fits], minlength=H).astype(float)
    sizes = np.bincount(seg, minlength=H)
    # fractional item: the first one that does not fit
    part = np.flatnonzero(full < sizes)
    if part.size:
        idx = starts[part] + full[part].astype(np.int64)
        before = used[idx] - c[idx]
        full[part] += (capacity - before) / c[idx]
    return full


@dataclass
class MKAResult:
    value: float
    weights: np.ndarray  # (vehicles, items)


def solve_mka(inst: KnapsackInstance) -> MKAResult:
    """Continuous multiple knapsack: each item shared at most once in total."""
    K, n = inst.costs.shape
    weights = np.zeros((K, n))
    if K == 0 or n == 0:
        return MKAResult(0.0, weights)
    usable = np.isfinite(inst.costs) & (inst.capacities[:, None] > 0)
    live_items = np.flatnonzero(usable.any(axis=0))
    if live_items.size == 0:
        return MKAResult(0.0, weights)
    hosts = usable[:, live_items].sum(axis=0)
    if (hosts <= 1).all():
        # no competition: independent single knapsacks
        value = 0.0
        for k in range(K):
            cols = live_items[usable[k, live_items]]
            if cols.size:
                value += solve_ka(inst.capacities[k], inst.costs[k, cols])
                weights[k, cols] = _ka_weights(inst.capacities[k], inst.costs[k, cols])
        return MKAResult(float(value), weights)

    var_k, var_r = np.nonzero(usable[:, live_items])
    var_r_item = live_items[var_r]
    nv = var_k.size
    shared = np.flatnonzero(hosts > 1)
    m = K + shared.size
    A = np.zeros((m, nv))
    A[var_k, np.arange(nv)] = inst.costs[var_k, var_r_item]
    row_of = -np.ones(live_items.size, dtype=np.int64)
    row_of[shared] = K + np.arange(shared.size)
    rows = row_of[var_r]
    sel = rows >= 0
    A[rows[sel], np.flatnonzero(sel)] = 1.0
    b = np.r_[inst.capacities, np.ones(shared.size)]
    lp = LinearProgram(np.ones(nv), A, ["<="] * m, b, np.zeros(nv), np.ones(nv), "max")
    res = solve_lp(lp)
    weights[var_k, var_r_item] = res.x
    return MKAResult(float(res.objective), weights)


def _ka_weights(capacity: float, costs: np.ndarray) -> np.ndarray:
    order = np.argsort(costs, kind="stable")
    w = np.zeros(costs.size)
    left = capacity
    for j in order:
        if left <= 0:
            break
        take = min(1.0, left / costs[j])
        w[j] = take
        left -= take * costs[j]
    return w


@dataclass
class PotentialEstimate:
    value: float
    per_path: np.ndarray = field(repr=False)

    @property
    def H(self) -> int:
        return int(self.per_path.size)


class SampleSet:
    """``H`` sample paths stored as one concatenated array for vectorized
    cost evaluation."""

    def __init__(self, paths: Sequence[SamplePath]):
        self.paths = list(paths)
        sizes = np.array([len(p) for p in self.paths], dtype=np.int64)
        self.offsets = np.r_[0, np.cumsum(sizes)].astype(np.int64)
        if self.paths:
            self.times = np.concatenate([p.times for p in self.paths])
            self.nodes = np.concatenate([p.nodes for p in self.paths]).astype(np.int64)
            self.durations = np.concatenate([p.durations for p in self.paths])
        else:
            self.times = self.durations = np.zeros(0)
            self.nodes = np.zeros(0, dtype=np.int64)

    @property
    def H(self) -> int:
        return len(self.paths)

    def mean_size(self) -> float:
        return float(np.diff(self.offsets).mean()) if self.H else 0.0


class PotentialModel:
    """Potential estimates for fleet states at decision time ``now`` over a
    fixed sample set. Forecasts and cost rows are cached per vehicle state,
    so candidate decisions that share vehicles share the work."""

    def __init__(self, oracle: TravelTimeOracle, horizon: float, now: float, samples):
        self.oracle = oracle
        self.horizon = horizon
        self.now = now
        self.samples = samples if isinstance(samples, SampleSet) else SampleSet(samples)
        self._rows: dict = {}
        self._ka: dict = {}
        self.lp_solves = 0

    def _key(self, v: Routing):
        return id(v)

    def costs(self, v: Routing) -> np.ndarray:
        """Insertion costs of every sampled request for vehicle ``v``."""
        key = self._key(v)
        hit = self._rows.get(key)
        if hit is None:
            f = Forecast(v, self.now, self.horizon)
            s = self.samples
            hit = (v, f.budget, f.costs(self.oracle, s.times, s.nodes, s.durations))
            self._rows[key] = hit
        return hit[2]

    def capacity(self, v: Routing) -> float:
        self.costs(v)
        return max(self._rows[self._key(v)][1], 0.0)

    def single(self, v: Routing) -> np.ndarray:
        """Single-knapsack value per sample path."""
        key = self._key(v)
        hit = self._ka.get(key)
        if hit is None:
            hit = (v, _solve_ka_many(self.capacity(v), self.costs(v), self.samples.offsets))
            self._ka[key] = hit
        return hit[1]

    def multiple(self, vehicles) -> np.ndarray:
        """Multiple-knapsack value per sample path; idle vehicles are ignored."""
        active = [v for v in vehicles if v is not None]
        H = self.samples.H
        out = np.zeros(H)
        if not active:
            return out
        if len(active) == 1:
            return self.single(active[0]).copy()
        caps = np.array([self.capacity(v) for v in active])
        rows = np.stack([self.costs(v) for v in active])
        off = self.samples.offsets
        for h in range(H):
            a, b = off[h], off[h + 1]
            if b > a:
                out[h] = solve_mka(KnapsackInstance(caps, rows[:, a:b])).value
                self.lp_solves += 1
        return out

    def estimate_mka(self, vehicles) -> PotentialEstimate:
        per = self.multiple(vehicles)
        return PotentialEstimate(float(per.mean()) if per.size else 0.0, per)

    def alpha(self, vehicles) -> np.ndarray:
        """Per-path ratio of the multiple-knapsack value to the sum of single
        knapsack values (1 where both are zero)."""
        active = [v for v in vehicles if v is not None]
        if not active:
            raise ValueError("ratio needs at least one routing vehicle")
        num = self.multiple(active)
        den = np.sum([self.single(v) for v in active], axis=0)
        out = np.ones_like(num)
        np.divide(num, den, out=out, where=den > 0)
        return out

    def estimate_ka(self, vehicles, alpha: np.ndarray) -> PotentialEstimate:
        active = [v for v in vehicles if v is not None]
        if not active:
            per = np.zeros(self.samples.H)
        else:
            per = alpha * np.sum([self.single(v) for v in active], axis=0)
        return PotentialEstimate(float(per.mean()) if per.size else 0.0, per)


def alpha_ratio(vehicles, now: float, path: SamplePath, oracle: TravelTimeOracle, horizon: float) -> float:
    return float(PotentialModel(oracle, horizon, now, [path]).alpha(vehicles)[0])


def estimate_potential_mka(vehicles, now: float, paths, oracle: TravelTimeOracle, horizon: float) -> PotentialEstimate:
    return PotentialModel(oracle, horizon, now, paths).estimate_mka(vehicles)


def estimate_potential_ka(
    before, after, now: float, paths, oracle: TravelTimeOracle, horizon: float
) -> PotentialEstimate:
    """Single-knapsack estimate of the fleet ``after`` a decision, scaled by
    ratios computed on the fleet ``before`` it."""
    model = PotentialModel(oracle, horizon, now, paths)
    return model.estimate_ka(after, model.alpha(before))


def route_potential_coefficient(route: Route, paths, oracle: TravelTimeOracle, horizon: float) -> float:
    """Mean single-knapsack value of a route that leaves the depot at time 0."""
    if not route.requests and route.last == 0:
        return 0.0
    model = PotentialModel(oracle, horizon, 0.0, paths)
    per = model.single(Routing(0.0, route))
    return float(per.mean()) if per.size else 0.0
