import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats

from dvrpsr.cli import aggregate, main
from dvrpsr.demand import Request
from dvrpsr.instance import load_instance
from dvrpsr.network import generate_grid, save_graph
from dvrpsr.simulator import Scenario, save_scenarios


@pytest.fixture
def inst_file(tmp_path):
    path = tmp_path / "inst.json"
    assert main(["gen-instance", "--rows", "8", "--cols", "8", "--spacing", "800", "--rate", "0.08",
                 "--K", "2", "--horizon", "240", "--out", str(path)]) == 0
    return path


def four_static_scenarios(inst_file, tmp_path):
    inst = load_instance(inst_file)
    nodes = inst.graph.customer_nodes
    static = [Request(0.0, int(nodes[k * 9]), 8.0, k) for k in range(4)]
    dynamic = [Request(10.0 * (k + 1), int(nodes[k * 5 + 3]), 6.0, 4 + k) for k in range(6)]
    path = tmp_path / "sc.json"
    save_scenarios([Scenario(0, static, dynamic, 0)], path)
    return path


def test_gen_instance_and_scenarios(inst_file, tmp_path):
    inst = load_instance(inst_file)
    assert inst.K == 2 and inst.graph.n_nodes == 64
    out = tmp_path / "s.json"
    assert main(["gen-scenarios", "--instance", str(inst_file), "--scenarios", "3", "--seed", "4",
                 "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert [d["index"] for d in data] == [0, 1, 2]
    again = tmp_path / "s2.json"
    main(["gen-scenarios", "--instance", str(inst_file), "--scenarios", "3", "--seed", "4", "--out", str(again)])
    assert out.read_bytes() == again.read_bytes()


def test_gen_instance_from_graph_file(tmp_path):
    save_graph(generate_grid(5, 5, 700.0), tmp_path / "g.json")
    out = tmp_path / "sub" / "inst.json"
    out.parent.mkdir()
    assert main(["gen-instance", "--graph", str(tmp_path / "g.json"), "--K", "2", "--out", str(out)]) == 0
    assert load_instance(out).graph.n_nodes == 25


def test_plan_covers_all_static_requests(inst_file, tmp_path, capsys):
    sc = four_static_scenarios(inst_file, tmp_path)
    assert main(["plan", "--instance", str(inst_file), "--scenarios", str(sc), "--planner", "myopic"]) == 0
    data = json.loads(capsys.readouterr().out)
    served = sorted(i for r in data[0]["plan"]["routes"] for stop in r for i in stop["serve"])
    assert served == [0, 1, 2, 3]


def run_sim(inst_file, sc, out, *extra):
    argv = ["simulate", "--instance", str(inst_file), "--scenarios", str(sc), "--policy", "gp-ci",
            "--seed", "5", "--no-timing", "--out", str(out), *extra]
    assert main(argv) == 0
    return out.read_bytes()


def test_simulate_twice_is_identical(inst_file, tmp_path):
    a = run_sim(inst_file, 3, tmp_path / "a.csv")
    b = run_sim(inst_file, 3, tmp_path / "b.csv")
    assert a == b
    rows = list(csv.DictReader(io.StringIO(a.decode())))
    assert len(rows) == 3 and {r["policy"] for r in rows} == {"gp-ci"}


def test_simulate_with_plan_file(inst_file, tmp_path):
    sc = four_static_scenarios(inst_file, tmp_path)
    plan = tmp_path / "plan.json"
    assert main(["plan", "--instance", str(inst_file), "--scenarios", str(sc), "--planner", "potential",
                 "--H", "3", "--out", str(plan)]) == 0
    out = run_sim(inst_file, sc, tmp_path / "r.csv", "--plan", str(plan), "--policy", "pbp", "--H", "3")
    rows = list(csv.DictReader(io.StringIO(out.decode())))
    assert [r["planner"] for r in rows] == ["potential", "potential"]
    assert [r["policy"] for r in rows] == ["gp-ci", "pbp"]
    assert all(r["accepted"] != "" for r in rows)


def independent_paired_t(x, y):
    d = np.asarray(y) - np.asarray(x)
    n = d.size
    t = d.mean() / (d.std(ddof=1) / np.sqrt(n))
    return 2 * stats.t.sf(abs(t), n - 1)


def test_report_matches_independent_statistics(inst_file, tmp_path, capsys):
    out = tmp_path / "r.csv"
    run_sim(inst_file, 6, out, "--policy", "spbp,pbp", "--H", "3", "--reps", "2")
    assert main(["report", str(out)]) == 0
    text = capsys.readouterr().out
    summary_text, tests_text = text.split("\n\n")
    summary = list(csv.DictReader(io.StringIO(summary_text)))
    tests = list(csv.DictReader(io.StringIO(tests_text)))
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    by = {}
    for r in rows:
        by.setdefault(r["policy"], {})[(r["scenario"], r["rep"])] = float(r["acceptance_rate"])
    for s in summary:
        assert float(s["mean_acceptance_rate"]) == pytest.approx(np.mean(list(by[s["policy"]].values())), rel=1e-5)
        assert int(s["runs"]) == 12
    assert len(tests) == 3
    for t in tests:
        a, b = t["first"].split("/")[1], t["second"].split("/")[1]
        keys = sorted(by[a])
        x = [by[a][k] for k in keys]
        y = [by[b][k] for k in keys]
        if np.any(np.array(x) != np.array(y)):
            assert float(t["p_value"]) == pytest.approx(independent_paired_t(x, y), rel=1e-4)
        assert float(t["mean_second"]) - float(t["mean_first"]) == pytest.approx(np.mean(y) - np.mean(x), abs=1e-5)


def test_aggregate_skips_failed_runs():
    rows = [
        {"planner": "myopic", "policy": "a", "scenario": "0", "rep": "0", "acceptance_rate": "0.5",
         "mean_decision_ms": "1", "max_decision_ms": "2"},
        {"planner": "myopic", "policy": "a", "scenario": "1", "rep": "0", "acceptance_rate": "",
         "mean_decision_ms": "", "max_decision_ms": ""},
    ]
    summary, tests = aggregate(rows)
    assert summary[0]["runs"] == 1 and summary[0]["failed"] == 1
    assert tests == []


def test_errors_give_nonzero_exit(inst_file, tmp_path, capsys):
    assert main(["simulate", "--instance", str(tmp_path / "missing.json"), "--scenarios", "2",
                 "--policy", "gp-ci"]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["simulate", "--instance", str(inst_file), "--scenarios", "2", "--policy", "nope"]) == 2
    assert main(["simulate", "--instance", str(inst_file), "--scenarios", "abc", "--policy", "gp-ci"]) == 2
    assert main(["report", str(tmp_path / "none.csv")]) == 2
    with pytest.raises(SystemExit):
        main(["simulate", "--instance", str(inst_file), "--scenarios", "2", "--policy", "gp-ci", "--bogus"])
    with pytest.raises(SystemExit):
        main(["gen-instance"])  # needs --out


def test_module_entry_point(inst_file, tmp_path):
    res = subprocess.run([sys.executable, "-m", "dvrpsr", "simulate", "--instance", str(inst_file),
                          "--scenarios", "1", "--policy", "gp-ci", "--no-timing"],
                         capture_output=True, text=True, timeout=300)
    assert res.returncode == 0, res.stderr
    assert res.stdout.startswith("instance,planner,policy")


def test_threshold_weight_is_tuned_per_planner(inst_file, tmp_path):
    out = run_sim(inst_file, 2, tmp_path / "t.csv", "--policy", "pfa-ci", "--planner", "myopic,potential",
                  "--H", "2")
    rows = list(csv.DictReader(io.StringIO(out.decode())))
    assert [(r["scenario"], r["planner"], r["policy"]) for r in rows] == [
        ("0", "myopic", "gp-ci"), ("0", "myopic", "pfa-ci"), ("0", "potential", "gp-ci"), ("0", "potential", "pfa-ci"),
        ("1", "myopic", "gp-ci"), ("1", "myopic", "pfa-ci"), ("1", "potential", "gp-ci"), ("1", "potential", "pfa-ci"),
    ]
    assert all(r["accepted"] != "" for r in rows)
