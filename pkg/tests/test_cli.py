import json
import subprocess
import sys

import pytest

from rauzylab.cli import main


def run_cli(capsys, *argv):
    status = main(list(argv))
    out, err = capsys.readouterr()
    return status, out, err


def test_class_size(capsys, tmp_path):
    status, out, _ = run_cli(capsys, "class", "--pi", "ABC/CBA", "--out", str(tmp_path))
    assert status == 0
    assert json.loads(out)["size"] == 3
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "class" and manifest["config"]["pi"] == "ABC/CBA"
    assert "class.json" in manifest["outputs"]


def test_invalid_permutation(capsys, tmp_path):
    status, _, err = run_cli(capsys, "class", "--pi", "ABC/CAA", "--out", str(tmp_path))
    assert status == 2
    assert json.loads(err)["error"] == "InvalidPermutation"


def test_numerical_abort_exit_code(capsys, tmp_path):
    status, _, err = run_cli(capsys, "orbit", "--pi", "AB/BA", "--lambda", "1e-14,1",
                             "--out", str(tmp_path))
    assert status == 3
    assert json.loads(err)["exit"] == 3


def test_precondition_exit_code(capsys, tmp_path):
    status, _, err = run_cli(capsys, "sbc", "--preset", "d2-golden", "--c", "0.1", "--n", "5",
                             "--out", str(tmp_path))
    assert status == 2 and json.loads(err)["error"] == "EnNotDivergent"


def test_unknown_config_key(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"pi": "AB/BA", "colour": "red"}))
    status, _, err = run_cli(capsys, "class", "--config", str(cfg), "--out", str(tmp_path))
    assert status == 2 and json.loads(err)["error"] == "ConfigError"


def test_flags_override_config_and_env(capsys, tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"pi": "AB/BA"}))
    status, out, _ = run_cli(capsys, "class", "--config", str(cfg), "--pi", "ABCD/DCBA",
                             "--out", str(tmp_path / "a"))
    assert json.loads(out)["size"] == 7
    monkeypatch.setenv("RAUZYLAB_OUT", str(tmp_path / "env"))
    run_cli(capsys, "class", "--pi", "AB/BA", "--out", str(tmp_path / "ignored"))
    assert (tmp_path / "env" / "manifest.json").exists()


def test_exact_orbit_and_polygon(capsys, tmp_path):
    status, out, _ = run_cli(capsys, "orbit", "--pi", "AB/BA", "--lambda", "3/10,7/10", "--exact",
                             "--n", "1", "--out", str(tmp_path))
    assert status == 0
    assert json.loads(out)["end"]["lambda"] == ["3/4", "1/4"]
    status, out, _ = run_cli(capsys, "polygon", "--pi", "AB/BA", "--lambda", "3/10,7/10",
                             "--tau", "1/2,-1/5", "--exact", "--out", str(tmp_path))
    data = json.loads(out)
    assert data["area"] == "41/100" and data["after"][0]["area"] == "41/100"


def test_evl_manifest_round_trip(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_cli(capsys, "evl", "--preset", "d2-golden", "--n", "500", "--trials", "30", "--seed", "7",
            "--out", str(a))
    status, _, _ = run_cli(capsys, "evl", "--config", str(a / "manifest.json"), "--out", str(b))
    assert status == 0
    assert (a / "evl.csv").read_bytes() == (b / "evl.csv").read_bytes()
    assert (a / "evl.csv").read_text().startswith("# rauzylab-schema v1\n")


def test_ulam_output_feeds_stats(capsys, tmp_path):
    run_cli(capsys, "ulam", "--preset", "d2-golden", "--grid", "16", "--samples", "500",
            "--out", str(tmp_path / "u"))
    dens = tmp_path / "u" / "density.csv"
    status, out, _ = run_cli(capsys, "hitting", "--preset", "d2-golden", "--measure", str(dens),
                             "--level", "100", "--trials", "20", "--out", str(tmp_path / "h"))
    assert status == 0
    assert json.loads(out)["experiment"] == "hitting"


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "rauzylab.cli", "class", "--pi", "AB/BA",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["size"] == 1
