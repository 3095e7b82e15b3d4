"""Event-driven execution of the dynamic routing process: scenarios,
epochs, state transitions, run records and batched experiments."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .demand import Request
from .instance import Instance
from .planner import ColumnPool, Plan, generate_columns, plan_myopic, plan_potential
from .policies import (
    REJECT,
    Context,
    Decision,
    PolicyConfig,
    SystemState,
    make_policy,
    tune_gamma,
)
from .routes import EPS, Routing, is_finished, locate, vehicle_budget

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "instance", "planner", "policy", "scenario", "rep", "accepted", "total_dynamic",
    "acceptance_rate", "mean_decision_ms", "max_decision_ms", "seed",
)
PLANNERS = ("myopic", "potential")

# first entry of every spawn key: what the random stream is used for
STREAM_SCENARIO, STREAM_PLAN, STREAM_POLICY, STREAM_TUNING = 0, 1, 2, 3


class SimulationError(RuntimeError):
    """A hard fault: an infeasible decision or an infeasible terminal state."""


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the seed lineage ``(seed, *key)``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


# -- scenarios --------------------------------------------------------------------


@dataclass
class Scenario:
    index: int
    static: list
    dynamic: list
    seed: int = 0

    def __post_init__(self):
        times = [r.arrival for r in self.dynamic]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("dynamic arrivals must be sorted")
        fixed = list(self.dynamic)
        for k in range(1, len(fixed)):
            if fixed[k].arrival <= fixed[k - 1].arrival:
                log.warning("request %d arrives with its predecessor; shifted by 1e-9 min", fixed[k].id)
                r = fixed[k]
                fixed[k] = Request(fixed[k - 1].arrival + 1e-9, r.node, r.duration, r.id)
        self.dynamic = fixed

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "seed": self.seed,
            "static": [r.to_json() for r in self.static],
            "dynamic": [r.to_json() for r in self.dynamic],
        }

    @classmethod
    def from_json(cls, d: dict) -> "Scenario":
        return cls(
            int(d["index"]),
            [Request.from_json(r) for r in d["static"]],
            [Request.from_json(r) for r in d["dynamic"]],
            int(d.get("seed", 0)),
        )


def make_scenario(inst: Instance, index: int, seed: int) -> Scenario:
    """Static requests and a realized dynamic trajectory over ``(0, U]``."""
    rng = stream(seed, STREAM_SCENARIO, index)
    static = inst.model.sample_static(rng, first_id=0)
    path = inst.model.sample_path(0.0, inst.horizon, rng, first_id=len(static))
    return Scenario(index, static, path.requests, seed)


def make_scenarios(inst: Instance, count: int, seed: int) -> list:
    return [make_scenario(inst, k, seed) for k in range(count)]


def save_scenarios(scenarios: Sequence[Scenario], path) -> None:
    Path(path).write_text(json.dumps([s.to_json() for s in scenarios]) + "\n")


def load_scenarios(path) -> list:
    return [Scenario.from_json(d) for d in json.loads(Path(path).read_text())]


# -- planning ------------------------------------------------------------------------


def build_pool(inst: Instance, scenario: Scenario) -> ColumnPool:
    return generate_columns(scenario.static, inst.oracle, inst.horizon, inst.K)


def make_plan(inst: Instance, scenario: Scenario, kind: str, H: int, seed: int,
              pool: Optional[ColumnPool] = None) -> Plan:
    if kind not in PLANNERS:
        raise ValueError(f"unknown planner {kind!r}")
    pool = pool if pool is not None else build_pool(inst, scenario)
    if kind == "myopic":
        plan = plan_myopic(pool, inst.K, inst.oracle)
    else:
        rng = stream(seed, STREAM_PLAN, scenario.index)
        paths = [inst.model.sample_path(0.0, inst.horizon, rng) for _ in range(H)]
        plan = plan_potential(pool, inst.K, paths, inst.oracle)
    plan.check(scenario.static, inst.horizon)
    return plan


# -- runs ------------------------------------------------------------------------------


@dataclass
class EpochLog:
    epoch: int
    clock: float
    request: int
    vehicle: Optional[int]  # None for reject
    forced: bool
    decision_ms: float


@dataclass
class RunRecord:
    epochs: list
    accepted: int
    rejected: int
    traces: list  # per vehicle: list of (start, Route) executed
    stats: dict = field(default_factory=dict)

    @property
    def total_dynamic(self) -> int:
        return self.accepted + self.rejected

    @property
    def empty(self) -> bool:
        return self.total_dynamic == 0

    @property
    def acceptance_rate(self) -> float:
        # no dynamic requests: nothing was lost, report 1.0 and flag it
        return 1.0 if self.empty else self.accepted / self.total_dynamic

    @property
    def mean_decision_ms(self) -> float:
        return float(np.mean([e.decision_ms for e in self.epochs])) if self.epochs else 0.0

    @property
    def max_decision_ms(self) -> float:
        return float(max((e.decision_ms for e in self.epochs), default=0.0))

    def decisions(self) -> list:
        return [e.vehicle for e in self.epochs]


def _retire(vehicles: list, traces: list, now: float) -> list:
    out = []
    for k, v in enumerate(vehicles):
        if v is not None and is_finished(v, now):
            traces[k].append((v.start, v.route))
            v = None
        out.append(v)
    return out


def transition(vehicles: Sequence, decision: Decision, now: float, next_time: float, horizon: float,
               traces: Optional[list] = None) -> tuple:
    """Apply ``decision`` taken at ``now`` and advance the clock to
    ``next_time``; routes finished by then leave their vehicles idle."""
    if next_time < now:
        raise SimulationError("the clock cannot move backwards")
    if decision.accepted:
        v = decision.state
        if v is None or v.start > now + EPS or vehicle_budget(v, horizon) < -1e-6:
            raise SimulationError(f"infeasible decision on vehicle {decision.vehicle} at {now}")
    fleet = list(decision.apply(tuple(vehicles)))
    if traces is None:
        traces = [[] for _ in fleet]
    return tuple(_retire(fleet, traces, next_time))


def run_scenario(inst: Instance, plan: Plan, config: PolicyConfig, scenario: Scenario,
                 seed: int, rep: int = 0, timing: bool = True, policy=None) -> RunRecord:
    """Simulate one scenario under one policy; randomness for epoch ``t``
    comes from the lineage ``(seed, policy stream, scenario, rep, t)``."""
    ctx = Context(inst.oracle, inst.horizon, inst.model)
    policy = policy if policy is not None else make_policy(config, ctx)
    vehicles = plan.vehicles()
    if len(vehicles) != inst.K:
        raise SimulationError("plan fleet size differs from the instance")
    traces = [[] for _ in vehicles]
    logs = []
    accepted = 0
    now = 0.0
    for t, r in enumerate(scenario.dynamic):
        vehicles = transition(vehicles, REJECT, now, r.arrival, inst.horizon, traces)
        now = r.arrival
        state = SystemState(now, vehicles, r)
        rng = stream(seed, STREAM_POLICY, scenario.index, rep, t) if not config.deterministic else None
        t0 = time.perf_counter()
        decision = policy.decide(state, rng)
        ms = (time.perf_counter() - t0) * 1000.0 if timing else 0.0
        logs.append(EpochLog(t, now, r.id, decision.vehicle, decision.forced, ms))
        if decision.accepted:
            accepted += 1
            vehicles = transition(vehicles, decision, now, now, inst.horizon, traces)
    vehicles = transition(vehicles, REJECT, now, inst.horizon, inst.horizon, traces)
    record = RunRecord(logs, accepted, len(scenario.dynamic) - accepted, traces, dict(policy.stats))
    verify_record(record, scenario, inst.horizon)
    return record


def verify_record(record: RunRecord, scenario: Scenario, horizon: float) -> None:
    """Every static and accepted request served exactly once, all routes
    back at the depot by the end of the service period."""
    served = []
    for trace in record.traces:
        for start, route in trace:
            if start + route.duration > horizon + 1e-6:
                raise SimulationError(f"a route ends at {start + route.duration} after {horizon}")
            served.extend(q.id for q in route.requests)
    wanted = [q.id for q in scenario.static]
    by_id = {q.id: q for q in scenario.dynamic}
    wanted += [by_id[e.request].id for e in record.epochs if e.vehicle is not None]
    if sorted(served) != sorted(wanted):
        raise SimulationError("served requests differ from static plus accepted requests")


# -- snapshots ---------------------------------------------------------------------------


def vehicle_position(v: Optional[Routing], now: float, inst: Instance) -> dict:
    xy = inst.graph.xy
    depot = inst.graph.depot
    if v is None:
        return {"status": "idle", "xy": xy[depot].tolist(), "node": depot, "onward": [], "to_serve": []}
    rep = locate(v, now)
    route = v.route
    if rep.status == "in_transit":
        a, b = rep.arc
        pos = (1.0 - rep.fraction) * xy[a] + rep.fraction * xy[b]
        node = a
    else:
        node = route.nodes[rep.position]
        pos = xy[node]
    first = rep.anchor + (1 if rep.status == "in_service" else 0)
    to_serve = [q.id for s in route.serve[first:] for q in s] if rep.status != "done" else []
    return {
        "status": rep.status,
        "xy": [float(pos[0]), float(pos[1])],
        "node": int(node),
        "onward": [int(n) for n in rep.onward_nodes],
        "to_serve": to_serve,
    }


def export_snapshot(state: SystemState, path, inst: Instance, accepted: Sequence[int] = (),
                    served: Sequence[int] = ()) -> dict:
    """Write the state as JSON for external plotting and return it."""
    data = {
        "clock": state.now,
        "pending": state.pending.to_json() if state.pending is not None else None,
        "vehicles": [dict(id=k, **vehicle_position(v, state.now, inst)) for k, v in enumerate(state.vehicles)],
        "accepted": sorted(int(i) for i in accepted),
        "served": sorted(int(i) for i in served),
    }
    Path(path).write_text(json.dumps(data, indent=1) + "\n")
    return data


# -- experiments ---------------------------------------------------------------------


@dataclass(frozen=True)
class RunSpec:
    planner: str
    config: PolicyConfig
    label: str


def _row(inst: Instance, spec: RunSpec, scenario: Scenario, rep: int, seed: int,
         record: Optional[RunRecord]) -> dict:
    row = {
        "instance": inst.name, "planner": spec.planner, "policy": spec.label,
        "scenario": scenario.index, "rep": rep, "seed": seed,
    }
    if record is None:
        row.update(accepted="", total_dynamic=len(scenario.dynamic), acceptance_rate="",
                   mean_decision_ms="", max_decision_ms="")
    else:
        row.update(
            accepted=record.accepted,
            total_dynamic=record.total_dynamic,
            acceptance_rate=record.acceptance_rate,
            mean_decision_ms=record.mean_decision_ms,
            max_decision_ms=record.max_decision_ms,
        )
    return row


def _scenario_task(args) -> list:
    inst, scenario, specs, reps, seed, H_plan, timing, preset = args
    plans: dict = dict(preset)
    pool = None
    rows = []
    for spec in specs:
        if spec.planner not in plans:
            try:
                pool = pool if pool is not None else build_pool(inst, scenario)
                plans[spec.planner] = make_plan(inst, scenario, spec.planner, H_plan, seed, pool)
            except Exception as exc:  # planning failure marks the runs failed
                log.error("scenario %d: %s planning failed: %s", scenario.index, spec.planner, exc)
                plans[spec.planner] = None
        plan = plans[spec.planner]
        first = None
        for rep in range(reps):
            if plan is None:
                rows.append(_row(inst, spec, scenario, rep, seed, None))
                continue
            if spec.config.deterministic and first is not None:
                rows.append(_row(inst, spec, scenario, rep, seed, first))
                continue
            try:
                rec = run_scenario(inst, plan, spec.config, scenario, seed, rep, timing)
            except Exception as exc:
                log.error("scenario %d rep %d %s failed: %s", scenario.index, rep, spec.label, exc)
                rec = None
            if spec.config.deterministic:
                first = rec
            rows.append(_row(inst, spec, scenario, rep, seed, rec))
    return rows


def run_experiment(
    inst: Instance,
    planners: Sequence[str],
    policies: Sequence[PolicyConfig],
    scenarios,
    reps: int,
    seed: int,
    workers: int = 1,
    timing: bool = True,
    H_plan: int = 50,
    labels: Optional[Sequence[str]] = None,
    plans: Optional[dict] = None,
) -> list:
    """Run every planner x policy x scenario x rep and return result rows in
    canonical order (scenario, planner, policy, rep). ``scenarios`` is a
    count or a list of :class:`Scenario`. Deterministic policies run once per
    scenario and the record is repeated across reps. ``plans`` maps
    ``(planner, scenario index)`` to a precomputed :class:`Plan`."""
    if isinstance(scenarios, int):
        scenarios = make_scenarios(inst, scenarios, seed)
    labels = list(labels) if labels is not None else [c.label for c in policies]
    specs = [RunSpec(p, c, lab) for p in planners for c, lab in zip(policies, labels)]
    plans = plans or {}
    tasks = [
        (inst, s, specs, reps, seed, H_plan, timing,
         {p: plans[(p, s.index)] for p in planners if (p, s.index) in plans})
        for s in scenarios
    ]
    if workers > 1 and len(tasks) > 1:
        import multiprocessing as mp

        with mp.get_context("spawn").Pool(min(workers, len(tasks))) as pool:
            chunks = pool.map(_scenario_task, tasks, chunksize=1)
    else:
        chunks = [_scenario_task(t) for t in tasks]
    return [row for chunk in chunks for row in chunk]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else ""
    return str(value)


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_results(rows: Sequence[dict], path) -> None:
    Path(path).write_text(rows_to_csv(rows))


def read_results(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- threshold tuning ----------------------------------------------------------------


def tune_pfa_gamma(inst: Instance, seed: int, scenarios: int = 5, planner: str = "myopic",
                   routing: str = "CI", H_plan: int = 50, **search) -> float:
    """Weight of the threshold policy that maximizes the mean acceptance
    rate on tuning scenarios drawn independently of the test scenarios."""
    tuning = [make_scenario(inst, k, int(stream(seed, STREAM_TUNING).integers(2**31))) for k in range(scenarios)]
    plans = [make_plan(inst, s, planner, H_plan, seed) for s in tuning]

    def evaluate(gamma: float) -> float:
        cfg = PolicyConfig("PFA", routing, gamma=gamma)
        rates = [run_scenario(inst, p, cfg, s, seed, timing=False).acceptance_rate for s, p in zip(tuning, plans)]
        return float(np.mean(rates))

    return tune_gamma(evaluate, **search)
