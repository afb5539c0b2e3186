import json
import subprocess
import sys

import pytest

from tmextremal.cli import main, parse_config, read_config, UsageError


def run_json(tmp_path, *args, name="out.json"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, (json.loads(out.read_text()) if out.exists() else None), out


def test_verify_deterministic(tmp_path):
    c1, rep, f1 = run_json(tmp_path, "verify", "--seed", "0", name="a.json")
    c2, _, f2 = run_json(tmp_path, "verify", "--seed", "0", name="b.json")
    assert c1 == c2 == 0
    assert f1.read_bytes() == f2.read_bytes()
    assert rep["status"] == "ok" and all(rep["results"]["checks"].values())
    assert rep["wall_time"] is None and rep["schema_version"] == "1"


def test_bubble_3d(tmp_path):
    code, rep, _ = run_json(tmp_path, "bubble", "--dim", "3", "--beta", "0.25")
    assert code == 0
    assert rep["config"]["dim"] == 3
    assert rep["results"]["mass"] == pytest.approx(1.0, abs=1e-6)


def test_unknown_flag_writes_nothing(tmp_path):
    code, rep, out = run_json(tmp_path, "verify", "--bogus")
    assert code == 2 and rep is None and not out.exists()


def test_critical_eps_rejected(tmp_path):
    code, rep, _ = run_json(tmp_path, "maximize", "--eps", "0")
    assert code == 2 and rep is None


def test_config_file_with_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# model\nmodel.beta = 0.25\nmodel.eps = 0.2\ngrid.nodes = 200\nsweep.eps_list = 0.3, 0.2\n")
    assert read_config(cfg) == {"beta": 0.25, "eps": 0.2, "nodes": 200, "eps_list": [0.3, 0.2]}
    rc = parse_config(["maximize", "--config", str(cfg), "--nodes", "300"])
    assert rc.beta == 0.25 and rc.nodes == 300


def test_bad_config(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("model.colour = 3\n")
    with pytest.raises(UsageError):
        parse_config(["bubble", "--config", str(cfg)])
    code, _, _ = run_json(tmp_path, "bubble", "--config", str(cfg))
    assert code == 2


def test_tau_sweep(tmp_path):
    code, rep, _ = run_json(tmp_path, "sweep", "--tau-list", "0.25,1,4")
    assert code == 0
    assert rep["results"]["scaling_law_within_2e-4"] is True
    assert len(rep["results"]["points"]) == 3


def test_eps_sweep_parallel_matches_serial(tmp_path):
    args = ["sweep", "--eps-list", "0.4,0.2", "--nodes", "200"]
    c1, serial, _ = run_json(tmp_path, *args, name="s.json")
    c2, par, _ = run_json(tmp_path, *args, "--workers", "2", name="p.json")
    assert c1 == c2 == 0
    assert serial["results"] == par["results"]
    assert serial["results"]["trends"]["lambda_nondecreasing"] is True


def test_failing_point_is_flagged(tmp_path):
    cfg = tmp_path / "short.cfg"
    cfg.write_text("solver.max_iter = 1\n")
    code, rep, _ = run_json(tmp_path, "sweep", "--config", str(cfg), "--eps-list", "0.3,0.2", "--nodes", "200")
    assert code == 1
    assert rep["status"] == "numeric_failure"
    assert all(p["converged"] is False for p in rep["results"]["points"])


def test_maximize_csv(tmp_path):
    csv = tmp_path / "u.csv"
    code, rep, _ = run_json(tmp_path, "maximize", "--eps", "0.2", "--nodes", "200", "--csv", str(csv))
    assert code == 0 and rep["results"]["converged"]
    assert csv.read_text().startswith("# N=2")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "tmextremal", "threshold"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["results"]["threshold"] == pytest.approx(19.1788591, rel=1e-5)
