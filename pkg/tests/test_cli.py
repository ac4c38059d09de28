import csv
import json
import subprocess
import sys
from dataclasses import replace

import pytest

from howard_lsc import bench_models
from howard_lsc.cli import main
from howard_lsc.model import Action, dumps_model, dumps_policy
from howard_lsc.operators import evaluate_policy

from conftest import single_node


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def threshold_file(tmp_path, capsys):
    p = tmp_path / "t.json"
    assert run(capsys, "gen", "threshold", "--n-cells", 11, "-o", p)[0] == 0
    return p


def test_validate_ok(capsys, threshold_file):
    code, out, _ = run(capsys, "validate", threshold_file)
    assert code == 0 and json.loads(out)["ok"]


def test_validate_row_sum(capsys, tmp_path):
    m = single_node()
    bad = replace(m, actions=((Action(0, 1.0, ((0, 0.99),)),),))
    p = tmp_path / "bad.json"
    p.write_text(dumps_model(bad))
    code, out, err = run(capsys, "validate", p)
    rep = json.loads(out)
    assert code == 1
    assert rep["violations"][0]["rule"] == "RowSumViolation"
    assert rep["violations"][0]["location"] == [0, 0]
    assert "RowSumViolation(0,0)" in err


def test_validate_alpha_override(capsys, tmp_path):
    p = tmp_path / "q.json"
    p.write_text(dumps_model(bench_models.make_queueing_model()))
    assert run(capsys, "validate", p)[0] == 0
    code, out, err = run(capsys, "validate", p, "--alpha", "0.95")
    assert code == 1 and "gamma >= 1" in err
    assert json.loads(out)["certificate"]["pass"] is False


def test_validate_strict_cc(capsys, tmp_path):
    m = bench_models.make_threshold_model(5)
    w = list(m.weight)
    w[-1] = 2.0
    p = tmp_path / "w.json"
    p.write_text(dumps_model(replace(m, weight=tuple(w))))
    code, _, err = run(capsys, "validate", p)
    assert code == 0 and "warning" in err
    assert run(capsys, "validate", p, "--strict-cc")[0] == 1


def test_certify(capsys, threshold_file):
    code, out, _ = run(capsys, "certify", threshold_file)
    assert code == 0 and json.loads(out)["gamma"] == 0.9


def test_solve_pi_compare(capsys, threshold_file, tmp_path):
    trace = tmp_path / "trace.csv"
    pol = tmp_path / "f.json"
    code, out, _ = run(
        capsys, "solve", threshold_file, "--algorithm", "pi", "--compare", "--trace-out", trace, "--policy-out", pol
    )
    s = json.loads(out)
    assert code == 0
    assert s["wnorm_gap"] <= 2e-9 and s["descent_chain_ok"] and s["max_rate_ratio"] <= s["gamma"]
    rows = list(csv.reader(trace.open()))
    assert rows[0] == ["n", "wnorm_gap", "rate_ratio", "chain_ok", "lsc_check", "terminated_by"]
    assert json.loads(pol.read_text()) == s["policy"]


def test_solve_json_trace(capsys, threshold_file, tmp_path):
    trace = tmp_path / "trace.json"
    assert run(capsys, "solve", threshold_file, "--trace-out", trace)[0] == 0
    assert json.loads(trace.read_text())["terminated_by"] == "fixed_point"


def test_solve_pi_best_matches_pi_iterations(capsys, tmp_path):
    p = tmp_path / "r.json"
    p.write_text(dumps_model(bench_models.make_random_finite_mdp(30, 3, 3, seed=4)))
    _, out_pi, _ = run(capsys, "solve", p, "--algorithm", "pi")
    code, out_bi, _ = run(capsys, "solve", p, "--algorithm", "pi-best", "--epsilon", "0")
    assert code == 0
    assert json.loads(out_bi)["iterations"] == json.loads(out_pi)["iterations"]


def test_solve_vi_and_max_iter(capsys, threshold_file):
    assert run(capsys, "solve", threshold_file, "--algorithm", "vi", "--compare")[0] == 0
    code, out, _ = run(capsys, "solve", threshold_file, "--max-iter", "1")
    assert code == 1 and json.loads(out)["terminated_by"] == "max_iter"


def test_solve_with_f0(capsys, threshold_file, tmp_path):
    f0 = tmp_path / "f0.json"
    f0.write_text(json.dumps([0] * 12))
    assert run(capsys, "solve", threshold_file, "--f0", f0)[0] == 0
    f0.write_text(json.dumps([5] * 12))
    assert run(capsys, "solve", threshold_file, "--f0", f0)[0] == 1


def test_missing_and_malformed(capsys, tmp_path):
    assert run(capsys, "solve", tmp_path / "nope.json")[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "validate", bad)[0] == 2
    bad.write_text('{"alpha": 0.5, "nodes": [{"id": "x"}]}')
    assert run(capsys, "validate", bad)[0] == 2
    assert run(capsys, "frobnicate")[0] == 2


def test_eval(capsys, threshold_file, tmp_path):
    pol = tmp_path / "f.json"
    pol.write_text(json.dumps([1] * 12))
    code, out, _ = run(capsys, "eval", threshold_file, pol, "--method", "iterative")
    assert code == 0 and len(json.loads(out)["value"]) == 12


def test_simulate(capsys, tmp_path):
    p = tmp_path / "one.json"
    p.write_text(dumps_model(single_node()))
    pol = tmp_path / "f.json"
    pol.write_text(dumps_policy(single_node().first_policy()))
    args = ("simulate", p, pol, "--x0", 0, "--n-traj", 50, "--horizon", 12, "--seed", 3)
    code, out, _ = run(capsys, *args)
    est = json.loads(out)
    assert code == 0
    assert est["mean"] == pytest.approx(2 * (1 - 0.5**12), abs=1e-15)
    assert set(est) == {"mean", "halfwidth95", "truncation_bound", "n_traj", "horizon", "seed"}
    assert run(capsys, *args)[1] == out
    pol.write_text("[1]")
    assert run(capsys, "simulate", p, pol)[0] == 1


def test_simulate_inventory_consistent(capsys, tmp_path):
    m = bench_models.make_inventory_model(5, alpha=0.5)
    p = tmp_path / "inv.json"
    p.write_text(dumps_model(m))
    pol = tmp_path / "f.json"
    f = m.first_policy()
    pol.write_text(dumps_policy(f))
    code, out, _ = run(capsys, "simulate", p, pol, "--x0", 2, "--n-traj", 4000, "--horizon", 40)
    est = json.loads(out)
    exact = evaluate_policy(m, f)[2]
    assert abs(est["mean"] - exact) <= est["halfwidth95"] + est["truncation_bound"]


@pytest.mark.parametrize("name", sorted(bench_models.GENERATORS))
def test_gen_every_family(capsys, name):
    code, out, _ = run(capsys, "gen", name)
    assert code == 0 and json.loads(out)["nodes"]


def test_module_entry_point(tmp_path):
    p = tmp_path / "r.json"
    r = subprocess.run(
        [sys.executable, "-m", "howard_lsc", "gen", "random", "--n-states", "5", "-o", str(p)],
        capture_output=True,
        text=True,
    )
    assert r.returncode == 0 and p.exists()
