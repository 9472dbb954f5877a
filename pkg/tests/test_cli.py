import csv
import json
import subprocess
import sys

import pytest

from finsler_gbc import cli
from finsler_gbc.dumps import CURVATURE_COLUMNS, INTEGRAND_COLUMNS

SMALL = ["--fiber-nodes", "8", "--base-grid", "6x6", "--ladder", "0"]


def _run(*argv):
    return subprocess.run([sys.executable, "-m", "finsler_gbc", *argv], capture_output=True, text=True,
                          timeout=600)


def _stderr_failures(text):
    return json.loads(text.strip().splitlines()[-1])


# -- documented examples (default scheme) --------------------------------------------

def test_chi_round_sphere_example():
    proc = _run("chi", "--metric", "round-s2", "--theorem", "c1")
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(proc.stdout)
    assert doc["chi"] == pytest.approx(2.0, abs=1e-3) and doc["residual"] < 1e-3
    assert doc["nearest"] == 2 and doc["passed"]


def test_verify_flat_torus_example():
    proc = _run("verify", "--metric", "flat-t2")
    assert proc.returncode == 0, proc.stderr
    assert "curvature" in proc.stdout and "R_vanishes" in proc.stdout


def test_berwald_gate_example():
    proc = _run("chi", "--metric", "randers-s2", "--theorem", "berwald")
    assert proc.returncode == cli.EXIT_REFUSED
    err = _stderr_failures(proc.stderr)
    assert err["status"] == "fail" and "Berwald gate" in err["failures"][0]["message"]


# -- in-process ------------------------------------------------------------------------

def test_verify_json_output(tmp_path, capsys):
    out = tmp_path / "verify.json"
    code = cli.main(["verify", "--metric", "flat-t2", "--instances", "5,2", "--out", str(out)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["passed"] and doc["schema_version"] == 1
    curv = [c for c in doc["checks"] if c["suite"] == "curvature" and c["name"] in ("max_R", "max_P")]
    assert curv and all(c["value"] < 1e-10 for c in curv)


def test_verify_strict_flags_printed_coefficient(capsys):
    code = cli.main(["verify", "--suites", "supertrace", "--instances", "3,2", "--strict"])
    assert code == cli.EXIT_FAIL
    err = _stderr_failures(capsys.readouterr().err)
    assert any(f["name"] == "g1_n2_k2_printed" for f in err["failures"])


def test_config_errors_are_machine_readable(capsys):
    assert cli.main(["chi", "--metric", "hyperbolic"]) == cli.EXIT_CONFIG
    err = _stderr_failures(capsys.readouterr().err)
    assert err["failures"][0]["error"] == "MetricError"
    assert cli.main(["chi", "--metric", "randers-s2", "--param", "eps=2"]) == cli.EXIT_CONFIG
    assert cli.main(["chi", "--param", "noequals"]) == cli.EXIT_CONFIG
    assert cli.main(["chi", "--base-grid", "16"]) == cli.EXIT_CONFIG
    assert cli.main(["verify", "--suites", "bogus"]) == cli.EXIT_CONFIG


def test_precedence_file_env_flags(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"metric": "flat-t2", "fiber_nodes": 12, "base_grid": [4, 4], "ladder": 1,
                               "params": {}, "theorem": "t2"}))
    rc = cli.resolve_config(["chi", "--config", str(cfg)], environ={})
    assert (rc.metric, rc.fiber_nodes, rc.base_grid, rc.ladder) == ("flat-t2", 12, (4, 4), 1)
    env = {"FINSLER_GBC_FIBER_NODES": "20", "FINSLER_GBC_BASE_GRID": "6x6", "FINSLER_GBC_STRICT": "1"}
    rc = cli.resolve_config(["chi", "--config", str(cfg)], environ=env)
    assert (rc.fiber_nodes, rc.base_grid, rc.strict) == (20, (6, 6), True)
    rc = cli.resolve_config(["chi", "--config", str(cfg), "--fiber-nodes", "24"], environ=env)
    assert rc.fiber_nodes == 24 and rc.base_grid == (6, 6)
    env = {"FINSLER_GBC_METRIC": "randers-s2", "FINSLER_GBC_PARAMS": "eps=0.2"}
    rc = cli.resolve_config(["chi"], environ=env)
    assert rc.metric == "randers-s2" and rc.params == {"eps": "0.2"}
    rc = cli.resolve_config(["chi", "--param", "eps=0.3"], environ=env)
    assert rc.params == {"eps": "0.3"}


def test_bad_config_file(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"colour": "blue"}))
    with pytest.raises(cli.ConfigError, match="unknown config keys"):
        cli.resolve_config(["chi", "--config", str(cfg)], environ={})
    cfg.write_text("{not json")
    with pytest.raises(cli.ConfigError, match="valid JSON"):
        cli.resolve_config(["chi", "--config", str(cfg)], environ={})


def test_empty_config_is_runnable():
    rc = cli.resolve_config(["chi"], environ={})
    assert rc.metric == "round-s2" and rc.theorem == "c1" and rc.scheme().ladder == 2


def test_chi_is_byte_deterministic(tmp_path):
    outs = []
    for i, threads in enumerate(("1", "1", "3")):
        path = tmp_path / f"r{i}.json"
        code = cli.main(["chi", "--metric", "randers-s2", "--theorem", "t2", *SMALL, "--no-timestamp",
                         "--threads", threads, "--out", str(path)])
        assert code in (0, 1)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] == outs[2]
    assert b"runtime_ms" not in outs[0] and b"timestamp" not in outs[0]


def test_chi_dump_and_strict(tmp_path, capsys):
    dump = tmp_path / "int.csv"
    out = tmp_path / "r.json"
    code = cli.main(["chi", "--metric", "quartic-t2", "--theorem", "berwald", *SMALL, "--strict",
                     "--dump", str(dump), "--out", str(out)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["nearest"] == 0 and doc["passed"]
    with open(dump, newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == INTEGRAND_COLUMNS and len(rows) > 1


def test_strict_topology_failure(capsys):
    # too coarse to resolve the sphere: inconclusive or wrong integer, never silently rounded
    code = cli.main(["chi", "--metric", "randers-s2", "--theorem", "t2", "--fiber-nodes", "4",
                     "--base-grid", "2x2", "--ladder", "0", "--strict"])
    out = json.loads(capsys.readouterr().out)
    assert out["residual"] == pytest.approx(abs(out["chi"] - out["nearest"]))
    assert (code == 0) == out["passed"]


def test_dump_command(tmp_path, capsys):
    code = cli.main(["dump", "--metric", "randers-s2", "--theorem", "t2", *SMALL, "--out", str(tmp_path)])
    assert code == 0
    counts = json.loads(capsys.readouterr().out)
    with open(tmp_path / "curvature.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CURVATURE_COLUMNS
    assert len(rows) - 1 == counts["curvature_rows"] > 0
    with open(tmp_path / "integrands.csv", newline="") as fh:
        assert sum(1 for _ in fh) - 1 == counts["integrand_rows"]


def test_calibrate(tmp_path, capsys):
    out = tmp_path / "conventions.json"
    assert cli.main(["calibrate", "--out", str(out)]) == 0
    rec = json.loads(out.read_text())
    assert rec["passed"] and rec["checks"]["chi_positive"]
    assert json.loads(capsys.readouterr().out)["ledger_hash"] == rec["ledger_hash"]
