"""Command-line entry point: instance and scenario generation, planning,
simulation and reporting."""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import os
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from .demand import PATTERNS
from .instance import DESK_SPACING, Instance, InstanceError, grid_instance, load_instance, save_instance
from .network import load_graph
from .planner import Plan, PlanningError
from .policies import CLI_POLICIES, policy_from_name
from .simulator import (
    PLANNERS,
    load_scenarios,
    make_plan,
    make_scenarios,
    read_results,
    rows_to_csv,
    run_experiment,
    save_scenarios,
    tune_pfa_gamma,
)

log = logging.getLogger("dvrpsr")


class CliError(Exception):
    pass


def _write_text(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _instance(args) -> Instance:
    if not args.instance:
        raise CliError("--instance is required")
    return load_instance(args.instance)


def _scenarios(args, inst: Instance) -> list:
    """``--scenarios`` is either a scenario file or a count."""
    spec = args.scenarios
    if spec is None:
        raise CliError("--scenarios is required")
    if Path(spec).is_file():
        return load_scenarios(spec)
    try:
        count = int(spec)
    except ValueError:
        raise CliError(f"--scenarios {spec!r} is neither a file nor a count") from None
    if count < 1:
        raise CliError("--scenarios must be positive")
    return make_scenarios(inst, count, args.seed)


# -- gen-instance -------------------------------------------------------------------


def cmd_gen_instance(args) -> int:
    if args.graph:
        from .demand import DemandSpec

        graph = load_graph(args.graph)
        demand = DemandSpec.from_pattern(graph, args.rate, args.horizon, args.pattern,
                                         dynamism=args.dynamism, radius=args.radius)
        # instance files resolve relative graph paths against their own directory
        ref = os.path.relpath(Path(args.graph).resolve(), Path(args.out).resolve().parent)
        inst = Instance(args.name, graph, demand, args.K, args.horizon, args.speed, args.seed,
                        graph_path=ref)
    else:
        inst = grid_instance(
            name=args.name, rows=args.rows, cols=args.cols, spacing=args.spacing, rate=args.rate,
            dynamism=args.dynamism, K=args.K, horizon=args.horizon, speed_kmh=args.speed,
            pattern=args.pattern, seed=args.seed, radius=args.radius,
        )
    Instance.from_json(json.loads(json.dumps(inst.to_json())), Path(args.out).parent)
    save_instance(inst, args.out)
    log.info("wrote %s: %d nodes, expected %.1f static and %.1f dynamic requests",
             args.out, inst.graph.n_nodes, inst.demand.static_count, inst.demand.rate * inst.horizon)
    return 0


# -- gen-scenarios ------------------------------------------------------------------


def cmd_gen_scenarios(args) -> int:
    inst = _instance(args)
    count = int(args.scenarios) if args.scenarios is not None else 30
    scenarios = make_scenarios(inst, count, args.seed)
    save_scenarios(scenarios, args.out)
    log.info("wrote %d scenarios to %s", count, args.out)
    return 0


# -- plan -----------------------------------------------------------------------------


def cmd_plan(args) -> int:
    inst = _instance(args)
    scenarios = _scenarios(args, inst)
    if args.index is not None:
        scenarios = [s for s in scenarios if s.index == args.index]
        if not scenarios:
            raise CliError(f"no scenario with index {args.index}")
    out = []
    for s in scenarios:
        plan = make_plan(inst, s, args.planner, args.H, args.seed)
        data = plan.to_json()
        Plan.from_json(data, s.static, inst.oracle).check(s.static, inst.horizon)
        out.append({"scenario": s.index, "plan": data})
        log.info("scenario %d: %s plan with %d routes, total duration %.2f",
                 s.index, args.planner, len(plan.routes), plan.total_duration())
    _write_text(args.out, json.dumps(out, indent=1) + "\n")
    return 0


def load_plans(path, scenarios, inst: Instance, planner_hint=None) -> dict:
    data = json.loads(Path(path).read_text())
    by_index = {s.index: s for s in scenarios}
    plans = {}
    for entry in data:
        s = by_index.get(int(entry["scenario"]))
        if s is None:
            continue
        plan = Plan.from_json(entry["plan"], s.static, inst.oracle)
        plan.check(s.static, inst.horizon)
        plans[(planner_hint or plan.kind, s.index)] = plan
    return plans


# -- simulate -------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    inst = _instance(args)
    scenarios = _scenarios(args, inst)
    names = [n for group in args.policy for n in group.split(",") if n]
    if not names:
        raise CliError("--policy is required")
    planners = [p for group in args.planner for p in group.split(",") if p]
    plans = {}
    if args.plan:
        plans = load_plans(args.plan, scenarios, inst)
        kinds = sorted({k for k, _ in plans})
        if not args.planner_given:
            planners = kinds
    base = [policy_from_name(name, H=args.H, gamma=args.gamma) for name in names]
    untuned = any(c.gamma is None and (c.kind == "PFA" or (c.kind == "Rollout" and c.base == "PFA")) for c in base)
    groups = [planners] if not untuned else [[p] for p in planners]
    rows = []
    for group in groups:
        # the threshold weight is tuned per (instance, planner, routing)
        tuned: dict = {}
        configs = []
        for name, cfg in zip(names, base):
            if cfg.gamma is None and (cfg.kind == "PFA" or (cfg.kind == "Rollout" and cfg.base == "PFA")):
                routing = cfg.routing if cfg.kind == "PFA" else "CI"
                if routing not in tuned:
                    log.info("tuning the threshold weight for %s under the %s plan", name, group[0])
                    tuned[routing] = tune_pfa_gamma(inst, args.seed, planner=group[0], routing=routing, H_plan=args.H)
                cfg = policy_from_name(name, H=args.H, gamma=tuned[routing])
            configs.append(cfg)
        rows += run_experiment(
            inst, group, configs, scenarios, args.reps, args.seed,
            workers=args.workers, timing=not args.no_timing, H_plan=args.H, labels=names, plans=plans,
        )
    order = {p: k for k, p in enumerate(planners)}
    rows.sort(key=lambda r: (r["scenario"], order[r["planner"]]))  # stable: policy and rep order kept
    text = rows_to_csv(rows)
    failed = sum(1 for r in rows if r["acceptance_rate"] == "")
    if failed:
        log.warning("%d of %d runs failed", failed, len(rows))
    _write_text(args.out, text)
    return 0


# -- report ---------------------------------------------------------------------------


def aggregate(rows) -> tuple:
    """Per (planner, policy) summaries and paired t-tests.

    Runs are paired on (scenario, rep). Failed runs (empty fields) are
    dropped from the summaries and from the pairs they belong to."""
    from scipy import stats

    groups = defaultdict(dict)
    failed = defaultdict(int)
    for r in rows:
        key = (r["planner"], r["policy"])
        if r["acceptance_rate"] == "":
            failed[key] += 1
            continue
        groups[key][(int(r["scenario"]), int(r["rep"]))] = (
            float(r["acceptance_rate"]), float(r["mean_decision_ms"]), float(r["max_decision_ms"]),
        )
    summary = []
    for key in sorted(set(groups) | set(failed)):
        vals = list(groups.get(key, {}).values())
        rates = [v[0] for v in vals]
        summary.append({
            "planner": key[0],
            "policy": key[1],
            "runs": len(vals),
            "failed": failed.get(key, 0),
            "mean_acceptance_rate": float(np.mean(rates)) if rates else float("nan"),
            "mean_decision_ms": float(np.mean([v[1] for v in vals])) if vals else float("nan"),
            "max_decision_ms": float(max((v[2] for v in vals), default=float("nan"))),
        })
    tests = []
    for a, b in itertools.combinations(sorted(groups), 2):
        if a[0] != b[0] and a[1] != b[1]:
            continue  # compare policies under one planner, or planners under one policy
        common = sorted(set(groups[a]) & set(groups[b]))
        x = np.array([groups[a][k][0] for k in common])
        y = np.array([groups[b][k][0] for k in common])
        if len(common) >= 2 and np.any(x != y):
            res = stats.ttest_rel(y, x)
            p = float(res.pvalue)
        else:
            p = 1.0 if len(common) >= 2 else float("nan")
        mx = float(np.mean(x)) if len(common) else float("nan")
        my = float(np.mean(y)) if len(common) else float("nan")
        tests.append({
            "first": f"{a[0]}/{a[1]}",
            "second": f"{b[0]}/{b[1]}",
            "pairs": len(common),
            "mean_first": mx,
            "mean_second": my,
            "relative_improvement": (my - mx) / mx if mx else float("nan"),
            "p_value": p,
        })
    return summary, tests


def _table(records, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in records:
        w.writerow([f"{r[c]:.6g}" if isinstance(r[c], float) else r[c] for c in columns])
    return buf.getvalue()


def cmd_report(args) -> int:
    if not args.results:
        raise CliError("report needs a results CSV")
    rows = []
    for path in args.results:
        if not Path(path).is_file():
            raise CliError(f"results file {path} does not exist")
        rows.extend(read_results(path))
    summary, tests = aggregate(rows)
    text = _table(summary, ["planner", "policy", "runs", "failed", "mean_acceptance_rate",
                            "mean_decision_ms", "max_decision_ms"])
    text += "\n" + _table(tests, ["first", "second", "pairs", "mean_first", "mean_second",
                                  "relative_improvement", "p_value"])
    _write_text(args.out, text)
    return 0


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dvrpsr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output file (stdout when omitted)")

    g = sub.add_parser("gen-instance", parents=[common], help="write an instance file")
    g.add_argument("--name", default="desk")
    g.add_argument("--graph", help="graph JSON file; a grid is generated when omitted")
    g.add_argument("--rows", type=int, default=20)
    g.add_argument("--cols", type=int, default=20)
    g.add_argument("--spacing", type=float, default=DESK_SPACING, help="metres between grid nodes")
    g.add_argument("--rate", type=float, default=0.1, help="dynamic requests per minute")
    g.add_argument("--dynamism", type=float, default=0.75)
    g.add_argument("--K", type=int, default=3)
    g.add_argument("--horizon", type=float, default=600.0)
    g.add_argument("--speed", type=float, default=20.0, help="km/h")
    g.add_argument("--pattern", choices=PATTERNS, default="CTD")
    g.add_argument("--radius", type=float, default=3000.0)
    g.set_defaults(func=cmd_gen_instance, need_out=True)

    s = sub.add_parser("gen-scenarios", parents=[common], help="sample request scenarios")
    s.add_argument("--instance", required=True)
    s.add_argument("--scenarios", default="30", help="number of scenarios")
    s.set_defaults(func=cmd_gen_scenarios, need_out=True)

    p = sub.add_parser("plan", parents=[common], help="compute initial route plans")
    p.add_argument("--instance", required=True)
    p.add_argument("--scenarios", required=True, help="scenario file or count")
    p.add_argument("--index", type=int, help="plan only this scenario")
    p.add_argument("--planner", choices=PLANNERS, default="myopic")
    p.add_argument("--H", type=int, default=50, help="sample paths for the potential planner")
    p.set_defaults(func=cmd_plan)

    m = sub.add_parser("simulate", parents=[common], help="run policies on scenarios")
    m.add_argument("--instance", required=True)
    m.add_argument("--scenarios", required=True, help="scenario file or count")
    m.add_argument("--plan", help="plan file from the plan command")
    m.add_argument("--planner", action="append", default=None,
                   help="myopic and/or potential (repeatable or comma separated)")
    m.add_argument("--policy", action="append", default=[],
                   help=f"one of {', '.join(CLI_POLICIES)} (repeatable or comma separated)")
    m.add_argument("--H", type=int, default=50)
    m.add_argument("--gamma", type=float, default=None, help="threshold weight; tuned when omitted")
    m.add_argument("--reps", type=int, default=1)
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--no-timing", action="store_true",
                   help="write zero decision times so that reruns are byte-identical")
    m.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", parents=[common], help="aggregate results CSV files")
    r.add_argument("results", nargs="+")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("DVRPSR_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "need_out", False) and not args.out:
        parser.error(f"{args.command} needs --out")
    if args.command == "simulate":
        args.planner_given = args.planner is not None
        args.planner = args.planner or ["myopic"]
        for name in (n for group in args.planner for n in group.split(",") if n):
            if name not in PLANNERS:
                parser.error(f"unknown planner {name!r}")
        if args.reps < 1 or args.workers < 1:
            parser.error("--reps and --workers must be positive")
    try:
        return args.func(args)
    except (CliError, InstanceError, PlanningError, ValueError, OSError) as exc:
        print(f"dvrpsr {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
