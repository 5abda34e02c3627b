import json
import math
import subprocess
import sys

import pytest

from fbbai.cli import EXIT_ERROR, main


@pytest.fixture
def inst(tmp_path):
    p = tmp_path / "inst.json"
    p.write_text(json.dumps({"family": "bernoulli", "means": [0.5, 0.45, 0.3]}))
    return p


@pytest.fixture
def inst2(tmp_path):
    p = tmp_path / "inst2.json"
    p.write_text(json.dumps({"family": "bernoulli", "means": [0.75, 0.25]}))
    return p


def last_json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_simulate_writes_report(tmp_path, inst, capsys):
    out = tmp_path / "run.csv"
    assert main(["simulate", "--instance", str(inst), "--policy", "uniform", "--T", "60", "--trials", "500",
                 "--seed", "7", "--checkpoints", "5", "--out", str(out)]) == 0
    doc = last_json(capsys)
    assert doc["aborted"] == 0 and 0 <= doc["final_poe"] <= 1
    assert out.read_text().splitlines()[0] == "t,poe,poe_stderr,disc_avg,disc_worst,disc_fail"
    assert json.loads((tmp_path / "run.csv.json").read_text())["seed"] == 7


def test_simulate_rejects_mismatched_table(tmp_path, inst, capsys):
    # a valid K=2 table cannot drive a K=3 instance
    bad = tmp_path / "t.json"
    bad.write_text(json.dumps({"kind": "table", "K": 2, "grids": [[0, 1], [0, 1]],
                               "alloc": [[[0.5, 0.5]] * 2] * 2}))
    assert main(["simulate", "--instance", str(inst), "--policy", f"table:{bad}", "--T", "10",
                 "--trials", "5", "--out", str(tmp_path / "x.csv")]) == EXIT_ERROR


def test_enumerate(tmp_path, capsys):
    p = tmp_path / "i.json"
    p.write_text(json.dumps({"family": "bernoulli", "means": [0.6, 0.4]}))
    assert main(["enumerate", "--instance", str(p), "--policy", "uniform", "--T", "2"]) == 0
    assert float(capsys.readouterr().out) == 0.16
    assert main(["enumerate", "--instance", str(p), "--policy", "uniform", "--T", "25"]) == EXIT_ERROR


def test_rate(inst, capsys):
    assert main(["rate", "--instance", str(inst), "--fixed", "0.3333333333333333,0.3333333333333333,"
                 "0.3333333333333334", "--grid", "0.01"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(8.4e-4, rel=0.05)


def test_train_and_use_model(tmp_path, inst, capsys):
    model = tmp_path / "m.json"
    args = ["train", "--iters", "4", "--n-true", "2", "--n-emp", "4", "--eval-q", "50",
            "--checkpoint-every", "2", "--seed", "3", "--out", str(model)]
    assert main(args) == 0
    doc = last_json(capsys)
    assert doc["selected_iteration"] in (2, 4)
    log = (tmp_path / "m.json.log.csv").read_text().splitlines()
    assert log[0] == "iter,E_min,eval_min_E" and len(log) == 3
    assert main(["rate", "--instance", str(inst), "--model", str(model), "--grid", "0.05"]) == 0
    assert float(capsys.readouterr().out) > 0
    out = tmp_path / "tnn.csv"
    assert main(["simulate", "--instance", str(inst), "--policy", f"tnn:{model}", "--T", "50",
                 "--trials", "300", "--checkpoints", "5", "--out", str(out)]) == 0
    assert not math.isnan(float(out.read_text().splitlines()[-1].split(",")[3]))


def test_rgo_solve_and_dot(tmp_path, inst2, capsys):
    table = tmp_path / "r.json"
    assert main(["rgo-solve", "--k", "2", "--pgrid", "0.25,0.75", "--qgrid", "0.25,0.75",
                 "--out", str(table)]) == 0
    assert last_json(capsys)["value"] == pytest.approx(math.log(3) / 2, abs=1e-9)
    assert main(["rgo-solve", "--k", "2", "--pgrid", "0.25,0.75", "--qgrid", "0.25,0.75", "--B", "2",
                 "--out", str(tmp_path / "b.json")]) == 0
    assert last_json(capsys)["value"] <= math.log(3) / 2
    for rule, B in ((f"table:{table}", 3), (f"table:{tmp_path / 'b.json'}", 2), ("uniform", 2),
                    ("fixed:0.6,0.4", 4)):
        out = tmp_path / "d.csv"
        assert main(["dot-sim", "--rule", rule, "--instance", str(inst2), "--T", "60", "--B", str(B),
                     "--trials", "20", "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 21
    capsys.readouterr()
    assert main(["dot-sim", "--rule", "greedy", "--instance", str(inst2), "--T", "60", "--B", "2",
                 "--out", str(tmp_path / "e.csv")]) == EXIT_ERROR


def test_fc_alloc(inst2, capsys):
    assert main(["fc-alloc", "--instance", str(inst2)]) == 0
    doc = last_json(capsys)
    assert doc["alloc"] == pytest.approx([0.5, 0.5], abs=1e-9)


def test_bad_inputs(tmp_path, capsys):
    assert main(["fc-alloc", "--instance", str(tmp_path / "missing.json")]) == EXIT_ERROR
    assert main(["simulate", "--instance", "x", "--policy", "uniform", "--out", "y", "--threads", "0"]) == EXIT_ERROR
    with pytest.raises(SystemExit):
        main(["launch"])


def test_repeat_is_byte_identical(tmp_path, inst):
    def run(tag, threads):
        out = tmp_path / f"{tag}.csv"
        cmd = [sys.executable, "-m", "fbbai", "simulate", "--instance", str(inst), "--policy", "fixed:0.4,0.4,0.2",
               "--T", "80", "--trials", "1200", "--seed", "5", "--checkpoints", "8", "--out", str(out),
               "--threads", str(threads)]
        subprocess.run(cmd, check=True, capture_output=True)
        return out.read_bytes() + (tmp_path / f"{tag}.csv.json").read_bytes()

    assert run("a", 1) == run("b", 8) == run("c", 8)
