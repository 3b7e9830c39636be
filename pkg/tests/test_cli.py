import csv
import json
import subprocess
import sys

import pytest

from models_zoo import motivating_pomdp, running_mdp
from verisynth.checker import evaluate_fsc, evaluate_policy
from verisynth.cli import EXIT_ERROR, EXIT_OK, EXIT_VIOLATED, generate_benchmark, main, maze_pomdp
from verisynth.models import Spec, fsc_from_dict, model_from_dict, model_to_dict, policy_from_dict

PMC = {"type": "pmdp", "states": 5, "params": {"v": [0.0, 1.0]},
       "rows": [{"s": 0, "to": [{"s": 1, "poly": {"v": 1}}, {"s": 4, "poly": {"const": 1, "v": -1}}]},
                {"s": 1, "to": [{"s": 2, "poly": {"const": 1, "v": -1}}, {"s": 4, "poly": {"v": 1}}]},
                {"s": 2, "to": [{"s": 3, "poly": {"v": 1}}, {"s": 4, "poly": {"const": 1, "v": -1}}]},
                {"s": 3, "to": [{"s": 3, "p": 1}]},
                {"s": 4, "to": [{"s": 4, "p": 1}]}],
       "labels": {"3": ["goal"]}}


@pytest.fixture
def files(tmp_path):
    out = {}
    for name, d in (("mdp", model_to_dict(running_mdp())), ("pomdp", model_to_dict(motivating_pomdp())),
                    ("pmc", PMC)):
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(d))
        out[name] = str(p)
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    out["bad"] = str(bad)
    return out


def run(argv, capsys):
    code = main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_check_exit_codes(files, capsys):
    code, out, _ = run(["check", "--model", files["mdp"], "--spec", "reach >= 0.85 {s6}", "--json"], capsys)
    assert code == EXIT_OK and json.loads(out)["value"] == pytest.approx(0.895)
    code, _, _ = run(["check", "--model", files["mdp"], "--spec", "reach >= 0.9 {s6}"], capsys)
    assert code == EXIT_VIOLATED
    code, _, err = run(["check", "--model", files["bad"], "--spec", "reach >= 0.9 {s6}"], capsys)
    assert code == EXIT_ERROR and "error" in err
    code, _, err = run(["check", "--model", files["mdp"], "--spec", "reach >= 2 {s6}"], capsys)
    assert code == EXIT_ERROR
    code, _, _ = run(["check", "--model", files["mdp"]], capsys)
    assert code == EXIT_ERROR
    code, _, _ = run(["frobnicate"], capsys)
    assert code == EXIT_ERROR


def test_check_methods_agree(files, capsys):
    vals = []
    for m in ("vi", "pi", "lp"):
        _, out, _ = run(["check", "--model", files["mdp"], "--spec", "reach >= 0.85 {goal}",
                         "--method", m, "--json"], capsys)
        vals.append(json.loads(out)["value"])
    assert max(vals) - min(vals) < 1e-9


def test_dual_pipeline_closes(files, tmp_path, capsys):
    out = tmp_path / "dual"
    code, _, _ = run(["synth", "--mode", "dual", "--model", files["mdp"], "--spec",
                      "reach >= 0.85 {s6}", "--out", str(out)], capsys)
    assert code == EXIT_OK
    pol = policy_from_dict(json.loads((out / "policy.json").read_text()))
    assert evaluate_policy(running_mdp(), pol, Spec.reach({6})).init_value == pytest.approx(0.895)
    code, o, _ = run(["check", "--model", files["mdp"], "--spec", "reach >= 0.85 {s6}",
                      "--policy", str(out / "policy.json"), "--json"], capsys)
    assert code == EXIT_OK and json.loads(o)["value"] == pytest.approx(0.895)
    code, o, _ = run(["synth", "--mode", "dual", "--model", files["mdp"], "--spec",
                      "reach >= 0.9 {s6}", "--json"], capsys)
    assert code == EXIT_VIOLATED and json.loads(o)["status"] == "violated"


def test_robust_fsc_pipeline(files, tmp_path, capsys):
    out = tmp_path / "fsc"
    code, _, _ = run(["synth", "--mode", "robust-fsc", "--k-memory", "2", "--model", files["pomdp"],
                      "--spec", "reach >= 0.9 {goal}", "--out", str(out)], capsys)
    assert code == EXIT_OK
    fsc = fsc_from_dict(json.loads((out / "fsc.json").read_text()))
    assert evaluate_fsc(motivating_pomdp(), fsc, Spec.reach({3})).init_value >= 0.9
    code, _, _ = run(["check", "--model", files["pomdp"], "--spec", "reach >= 0.9 {goal}",
                      "--fsc", str(out / "fsc.json")], capsys)
    assert code == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    assert rep["satisfied"] and rep["recheck_value"] >= 0.9


def test_param_scp_trace(files, tmp_path, capsys):
    out = tmp_path / "pscp"
    code, _, _ = run(["synth", "--mode", "param-scp", "--model", files["pmc"], "--spec",
                      "reach >= 0.14 {goal}", "--out", str(out)], capsys)
    assert code == EXIT_OK
    rows = list(csv.DictReader((out / "trace.csv").open()))
    acc = [float(r["value"]) for r in rows if r["accepted"] == "1"]
    assert all(b > a for a, b in zip(acc, acc[1:]))
    v = json.loads((out / "instantiation.json").read_text())["v"]
    rep = json.loads((out / "report.json").read_text())
    assert rep["recheck_value"] == pytest.approx(v * v * (1 - v), abs=1e-9)


def test_scenario_byte_identical(files, tmp_path, capsys):
    argv = ["scenario", "--model", files["pmc"], "--spec", "reach >= 0.1 {goal}",
            "--samples", "200", "--alpha", "1e-3", "--seed", "4", "--json"]
    code, a, _ = run(argv, capsys)
    _, b, _ = run(argv, capsys)
    assert code == EXIT_OK and a == b
    d = json.loads(a)
    assert d["K"] == 200 and d["L"] == d["viol_count"] and "nu_star" in d


def test_plan_single_episode(tmp_path, capsys):
    out = tmp_path / "plan"
    code, o, _ = run(["plan", "--variant", "update-div", "--episodes", "1", "--size", "4",
                      "--samples", "20", "--out", str(out)], capsys)
    assert code == EXIT_OK
    recs = [json.loads(x) for x in (out / "traces.jsonl").read_text().splitlines()]
    assert recs and {r["episode"] for r in recs} == {0} and {r["variant"] for r in recs} == {"update-div"}
    assert [r["t"] for r in recs] == list(range(len(recs)))
    rows = list(csv.DictReader((out / "summary.csv").open()))
    assert len(rows) == 1 and rows[0]["variant"] == "update-div"


def test_plan_bad_variant(capsys):
    code, _, err = run(["plan", "--variant", "nope", "--episodes", "1"], capsys)
    assert code == EXIT_ERROR and "unknown variant" in err


def test_generate_maze_one():
    m = maze_pomdp(1)
    assert m.n == 11 and m.labels[9] == frozenset({"goal"})
    assert m.obs[9] == "goal"
    # top corridor: corners, plain corridor cells and junctions
    assert [m.obs[s] for s in range(5)] == ["lu", "du", "u", "du", "ru"]
    assert m.obs[5] == m.obs[7] == "lr" and m.obs[8] == m.obs[10] == "dlr"
    assert len(set(m.obs)) == 7
    for s in range(m.n):
        for row in m.transitions[s]:
            assert abs(sum(e.p for _, e in row) - 1.0) < 1e-12


def test_generate_cli(tmp_path, capsys):
    out = tmp_path / "gen"
    for _ in range(2):
        code, _, _ = run(["generate", "--kind", "maze", "--size", "1", "--out", str(out)], capsys)
        assert code == EXIT_OK
    first = (out / "maze_1.json").read_text()
    run(["generate", "--kind", "maze", "--size", "1", "--out", str(out)], capsys)
    assert (out / "maze_1.json").read_text() == first
    assert model_from_dict(json.loads(first)).n == 11
    code, o, _ = run(["generate", "--kind", "grid", "--size", "1"], capsys)
    assert code == EXIT_OK and model_from_dict(json.loads(o)).n == 1
    code, _, _ = run(["generate", "--kind", "maze", "--size", "0"], capsys)
    assert code == EXIT_ERROR


@pytest.mark.parametrize("kind", ["grid", "maze", "navigation"])
def test_generators_deterministic(kind):
    a, sa = generate_benchmark(kind, 3, seed=2)
    b, sb = generate_benchmark(kind, 3, seed=2)
    assert model_to_dict(a) == model_to_dict(b) and sa == sb


def test_console_entry_point(files):
    p = subprocess.run([sys.executable, "-m", "verisynth", "check", "--model", files["mdp"],
                        "--spec", "reach >= 0.85 {s6}"], capture_output=True, text=True)
    assert p.returncode == 0 and "0.895" in p.stdout
