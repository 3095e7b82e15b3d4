"""Online scheduling policies: candidate generation, the two decision rules
and the greedy, threshold (PFA), rollout and knapsack-potential policies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .demand import DemandModel, Request, SamplePath
from .network import TravelTimeOracle
from .potential import PotentialModel, SampleSet
from .routes import (
    EPS,
    Routing,
    adjust,
    ci_evaluate,
    _insert_at,
    out_and_back,
    release_finished,
    vehicle_budget,
)

POLICY_KINDS = ("GP", "PFA", "Rollout", "SPbP", "PbP")


@dataclass(frozen=True)
class PolicyConfig:
    kind: str
    routing: str = "CI"  # routing of candidate decisions: "CI" or "R"
    H: int = 50
    gamma: Optional[float] = None
    base: str = "GP"  # rollout base policy, always run with CI routing

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.routing not in ("CI", "R"):
            raise ValueError(f"unknown routing policy {self.routing!r}")
        if self.kind in ("Rollout", "SPbP", "PbP") and self.H < 1:
            raise ValueError("sampling policies need H >= 1")
        if self.kind == "PFA" and self.gamma is not None and not self.gamma > 0:
            raise ValueError("PFA needs gamma > 0")
        if self.kind == "Rollout" and self.base not in ("GP", "PFA"):
            raise ValueError("rollout base must be GP or PFA")

    @property
    def deterministic(self) -> bool:
        return self.kind in ("GP", "PFA")

    @property
    def label(self) -> str:
        for name, cfg in CLI_POLICIES.items():
            if (cfg.kind, cfg.routing, cfg.base) == (self.kind, self.routing, self.base):
                return name
        return f"{self.kind.lower()}-{self.routing.lower()}"

    def to_json(self) -> dict:
        return {"kind": self.kind, "routing": self.routing, "H": self.H, "gamma": self.gamma, "base": self.base}

    @classmethod
    def from_json(cls, d: dict) -> "PolicyConfig":
        return cls(d["kind"], d.get("routing", "CI"), int(d.get("H", 50)), d.get("gamma"), d.get("base", "GP"))


CLI_POLICIES = {
    "gp-ci": PolicyConfig("GP", "CI"),
    "gp-r": PolicyConfig("GP", "R"),
    "pfa-ci": PolicyConfig("PFA", "CI"),
    "pfa-r": PolicyConfig("PFA", "R"),
    "rollout-gp": PolicyConfig("Rollout", "R", base="GP"),
    "rollout-pfa": PolicyConfig("Rollout", "R", base="PFA"),
    "spbp": PolicyConfig("SPbP", "R"),
    "pbp": PolicyConfig("PbP", "R"),
}


def policy_from_name(name: str, H: Optional[int] = None, gamma: Optional[float] = None) -> PolicyConfig:
    try:
        cfg = CLI_POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; choose from {', '.join(CLI_POLICIES)}") from None
    if H is not None:
        cfg = replace(cfg, H=H)
    if gamma is not None:
        cfg = replace(cfg, gamma=gamma)
    return cfg


@dataclass(frozen=True)
class SystemState:
    now: float
    vehicles: tuple
    pending: Request

    def with_vehicle(self, k: int, v) -> tuple:
        return self.vehicles[:k] + (v,) + self.vehicles[k + 1:]


@dataclass(frozen=True, eq=False)
class Decision:
    """``vehicle is None`` means reject; otherwise ``state`` is the new state
    of that vehicle."""

    vehicle: Optional[int] = None
    state: Optional[Routing] = None
    forced: bool = False
    consumption: float = 0.0
    fallback: bool = False

    @property
    def accepted(self) -> bool:
        return self.vehicle is not None

    def apply(self, vehicles: tuple) -> tuple:
        if self.vehicle is None:
            return tuple(vehicles)
        return tuple(vehicles[: self.vehicle]) + (self.state,) + tuple(vehicles[self.vehicle + 1:])


REJECT = Decision()


@dataclass
class Context:
    """Everything a policy needs besides the state."""

    oracle: TravelTimeOracle
    horizon: float
    demand: Optional[DemandModel] = None
    depot: int = 0

    def sample_paths(self, now: float, H: int, rng: np.random.Generator) -> list:
        if self.demand is None:
            raise ValueError("sampling policies need a demand model")
        return [self.demand.sample_path(now, self.horizon, rng) for _ in range(H)]


def idle_dispatch(state: SystemState, ctx: Context) -> Optional[Decision]:
    """Forced dispatch of the lowest-id idle vehicle when it can serve the
    pending request with an out-and-back trip."""
    r = state.pending
    idle = [k for k, v in enumerate(state.vehicles) if v is None]
    if not idle:
        return None
    o = ctx.oracle
    if state.now + o.travel_time(ctx.depot, r.node) + r.duration + o.travel_time(r.node, ctx.depot) > ctx.horizon + EPS:
        return None
    route = out_and_back(o, r, ctx.depot)
    v = Routing(state.now, route)
    return Decision(idle[0], v, forced=True, consumption=route.duration)


def candidate_decisions(state: SystemState, routing: str, ctx: Context):
    """``(forced, options)``: a forced idle dispatch, or the list of feasible
    decisions starting with reject, accepts in vehicle order."""
    if state.pending.arrival >= ctx.horizon:
        return None, [REJECT]
    forced = idle_dispatch(state, ctx)
    if forced is not None:
        return forced, [forced]
    options = [REJECT]
    for k, v in enumerate(state.vehicles):
        if v is None:
            continue
        adj = adjust(routing, v, state.pending, ctx.oracle, ctx.horizon)
        if adj is None or adj.budget < -EPS:
            continue
        consumption = vehicle_budget(v, ctx.horizon) - adj.budget
        options.append(Decision(k, Routing(v.start, adj.route), consumption=consumption, fallback=adj.fallback))
    return None, options


def apply_decision_rules(values: Sequence[float]) -> int:
    """Index of the chosen option given potential estimates ``values`` where
    index 0 is reject: accept iff one plus the best accept potential is at
    least the reject potential; the best accept is the first maximum."""
    if len(values) <= 1:
        return 0
    acc = np.asarray(values[1:], dtype=float)
    j = int(np.argmax(acc))
    slack = 1e-12 * max(1.0, abs(values[0]))
    return j + 1 if 1.0 + acc[j] >= values[0] - slack else 0


def pfa_value(vehicles, gamma: float, horizon: float) -> float:
    """``gamma`` times the total budget of the routing vehicles."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return gamma * sum(vehicle_budget(v, horizon) for v in vehicles if v is not None)


# -- policies ---------------------------------------------------------------------


class Policy:
    config: PolicyConfig

    def __init__(self, config: PolicyConfig, ctx: Context):
        self.config = config
        self.ctx = ctx
        self.stats = {"tsp_fallbacks": 0, "lp_solves": 0}

    def decide(self, state: SystemState, rng: Optional[np.random.Generator] = None) -> Decision:
        forced, options = candidate_decisions(state, self.config.routing, self.ctx)
        if forced is not None:
            return forced
        self.stats["tsp_fallbacks"] += sum(1 for d in options if d.fallback)
        if len(options) == 1:
            return REJECT
        return options[self.choose(state, options, rng)]

    def choose(self, state, options, rng) -> int:
        raise NotImplementedError


class GreedyPolicy(Policy):
    def choose(self, state, options, rng) -> int:
        return 1 + int(np.argmin([d.consumption for d in options[1:]]))


class ThresholdPolicy(Policy):
    """Total-budget value function. Potentials are compared relative to the
    reject state, so an accept has value ``-gamma * consumption``; the best
    accept is therefore the minimum-consumption one, found by comparing
    consumptions directly so that ties match the greedy policy exactly."""

    def choose(self, state, options, rng) -> int:
        gamma = self.config.gamma
        if gamma is None:
            raise ValueError("PFA policy needs a tuned gamma")
        j = 1 + int(np.argmin([d.consumption for d in options[1:]]))
        return j if _threshold_accepts(gamma, options[j].consumption) else 0


def _threshold_accepts(gamma: float, consumption: float) -> bool:
    return 1.0 - gamma * consumption >= -1e-12


class PotentialPolicy(Policy):
    """Multiple-knapsack potentials (PbP) or ratio-scaled single-knapsack
    potentials (S-PbP), over sample paths shared by all candidates."""

    def choose(self, state, options, rng) -> int:
        if rng is None:
            raise ValueError("potential policies need a random generator")
        paths = self.ctx.sample_paths(state.now, self.config.H, rng)
        model = PotentialModel(self.ctx.oracle, self.ctx.horizon, state.now, SampleSet(paths))
        values = self.potentials(model, state, options)
        self.stats["lp_solves"] += model.lp_solves
        return apply_decision_rules(values)

    def potentials(self, model: PotentialModel, state: SystemState, options) -> list:
        fleets = [d.apply(state.vehicles) for d in options]
        if self.config.kind == "PbP":
            return [model.estimate_mka(f).value for f in fleets]
        if not any(v is not None for v in state.vehicles):
            return [0.0] * len(options)
        alpha = model.alpha(state.vehicles)
        return [model.estimate_ka(f, alpha).value for f in fleets]


class RolloutPolicy(Policy):
    """Simulates every candidate forward under a cheap base policy (CI
    routing) over shared sample paths."""

    def choose(self, state, options, rng) -> int:
        if rng is None:
            raise ValueError("rollout needs a random generator")
        paths = self.ctx.sample_paths(state.now, self.config.H, rng)
        gamma = self.config.gamma if self.config.base == "PFA" else None
        if self.config.base == "PFA" and gamma is None:
            raise ValueError("rollout over PFA needs a tuned gamma")
        scores = []
        for d in options:
            fleet = d.apply(state.vehicles)
            total = sum(simulate_base(fleet, p, self.ctx, gamma) for p in paths)
            scores.append((1.0 if d.accepted else 0.0) + total / len(paths))
        best = max(scores[1:])
        # accepts first (lowest vehicle id); reject only when strictly better
        if scores[0] > best:
            return 0
        return 1 + scores[1:].index(best)


def simulate_base(vehicles, path: SamplePath, ctx: Context, gamma: Optional[float] = None) -> int:
    """Accepted count of the greedy (``gamma is None``) or threshold policy
    with cheapest insertion over the requests of ``path``."""
    fleet = list(vehicles)
    accepted = 0
    for u, node, dur in zip(path.times.tolist(), path.nodes.tolist(), path.durations.tolist()):
        if u >= ctx.horizon:
            continue
        fleet = release_finished(fleet, u)
        r = Request(u, int(node), dur)
        state = SystemState(u, tuple(fleet), r)
        forced = idle_dispatch(state, ctx)
        if forced is not None:
            fleet[forced.vehicle] = forced.state
            accepted += 1
            continue
        best = None
        for k, v in enumerate(fleet):
            if v is None:
                continue
            ev = ci_evaluate(v, r, ctx.oracle)
            if ev is None:
                continue
            delta = ev[0]
            if vehicle_budget(v, ctx.horizon) - delta < -EPS:
                continue
            if best is None or delta < best[0]:
                best = (delta, k, ev)
        if best is None:
            continue
        delta, k, (_, slot, wp, rep) = best
        if gamma is not None and not _threshold_accepts(gamma, delta):
            continue
        v = fleet[k]
        fleet[k] = Routing(v.start, _insert_at(v, rep, wp, slot, r, ctx.oracle))
        accepted += 1
    return accepted


_POLICY_CLASSES = {
    "GP": GreedyPolicy,
    "PFA": ThresholdPolicy,
    "SPbP": PotentialPolicy,
    "PbP": PotentialPolicy,
    "Rollout": RolloutPolicy,
}


def make_policy(config: PolicyConfig, ctx: Context) -> Policy:
    return _POLICY_CLASSES[config.kind](config, ctx)


def decide_gp(state: SystemState, routing: str, ctx: Context) -> Decision:
    return GreedyPolicy(PolicyConfig("GP", routing), ctx).decide(state)


def decide_pfa(state: SystemState, routing: str, gamma: float, ctx: Context) -> Decision:
    return ThresholdPolicy(PolicyConfig("PFA", routing, gamma=gamma), ctx).decide(state)


def decide_pbp(state: SystemState, routing: str, H: int, rng, ctx: Context) -> Decision:
    return PotentialPolicy(PolicyConfig("PbP", routing, H=H), ctx).decide(state, rng)


def decide_spbp(state: SystemState, routing: str, H: int, rng, ctx: Context) -> Decision:
    return PotentialPolicy(PolicyConfig("SPbP", routing, H=H), ctx).decide(state, rng)


def decide_rollout(state: SystemState, base: str, routing: str, H: int, rng, ctx: Context, gamma=None) -> Decision:
    return RolloutPolicy(PolicyConfig("Rollout", routing, H=H, gamma=gamma, base=base), ctx).decide(state, rng)


# -- threshold tuning ------------------------------------------------------------


def tune_gamma(
    evaluate: Callable[[float], float],
    lo: float = 1e-6,
    hi: float = 1e-1,
    factor: float = 10.0,
    rel_tol: float = 1e-3,
    max_evals: int = 60,
) -> float:
    """Maximize ``evaluate(gamma)`` over ``[lo, hi]``.

    A coarse pass over a geometric grid brackets the best value, then an
    additive search with halving steps refines it. The search assumes the
    objective is unimodal in gamma.
    """
    if not 0 < lo <= hi:
        raise ValueError("need 0 < lo <= hi")
    cache: dict = {}

    def f(g: float) -> float:
        g = float(min(max(g, lo), hi))
        if g not in cache:
            cache[g] = float(evaluate(g))
        return cache[g]

    if lo == hi:
        return lo
    n = max(2, int(math.ceil(math.log(hi / lo) / math.log(factor))) + 1)
    grid = np.geomspace(lo, hi, n)
    scores = [f(g) for g in grid]
    k = int(np.argmax(scores))
    best = float(grid[k])
    left = float(grid[k - 1]) if k > 0 else lo
    right = float(grid[k + 1]) if k + 1 < n else hi
    step = max(best - left, right - best) / 2.0
    while step > rel_tol * best and len(cache) < max_evals:
        moved = False
        for cand in (best - step, best + step):
            if left <= cand <= right and cand >= lo and f(cand) > f(best):
                best, moved = float(min(max(cand, lo), hi)), True
                break
        if not moved:
            step /= 2.0
    return best
