"""The CSV/JSON files the command-line tool writes are what the offline
plotting scripts read. They must parse with nothing but the standard library."""

import csv
import json
import os
import subprocess

import pytest

CLI = os.environ.get("PROXFLOW_CLI")

pytestmark = pytest.mark.skipif(not CLI, reason="PROXFLOW_CLI not set")


def run(*args):
    return subprocess.run([CLI, *args], capture_output=True, text=True)


def read(path):
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    return rows[0], [[float(v) for v in r] for r in rows[1:]]


def test_samples_csv(tmp_path):
    out = tmp_path / "o.csv"
    r = run("oracle", "--problem", "circle", "--y", "0", "-n", "30", "--seed", "1", "--out", str(out))
    assert r.returncode == 0, r.stderr
    header, rows = read(out)
    assert header == ["y0", "x0", "x1"]
    assert len(rows) == 30
    assert all(row[0] == 0.0 for row in rows)
    manifest = json.loads((tmp_path / "o.csv.manifest.json").read_text())
    assert manifest["command"] == "oracle"


def test_train_outputs_and_density(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"K": 1, "p": 2, "h": 4, "batch_b": 16, "epochs_e": 1, "steps_s": 3}))
    run_dir = tmp_path / "run"
    r = run("train", "--config", str(cfg), "--out", str(run_dir))
    assert r.returncode == 0, r.stderr
    header, rows = read(run_dir / "loss_history.csv")
    assert header == ["step", "loss", "penalty"]
    assert [int(row[0]) for row in rows] == [0, 1, 2]
    ck = json.loads((run_dir / "checkpoint.json").read_text())
    assert "blocks" in ck

    s = tmp_path / "s.csv"
    assert run("sample", "--ckpt", str(run_dir / "checkpoint.json"), "-n", "12", "--out", str(s)).returncode == 0
    d = tmp_path / "d.csv"
    assert run("density", "--ckpt", str(run_dir / "checkpoint.json"), "--in", str(s), "--out", str(d)).returncode == 0
    header, rows = read(d)
    assert header == ["x0", "x1", "z0", "z1", "logdensity"]
    assert len(rows) == 12


def test_eval_json_and_errors(tmp_path):
    a = tmp_path / "a.csv"
    a.write_text("x0,x1\n0,0\n1,1\n")
    r = run("eval", "--metric", "w2", "--a", str(a), "--b", str(a))
    assert r.returncode == 0
    report = json.loads(r.stdout)
    assert report["metric"] == "w2" and report["value"] == 0
    bad = run("eval", "--metric", "w2", "--a", str(tmp_path / "missing.csv"), "--b", str(a))
    assert bad.returncode == 1
    assert "error" in json.loads(bad.stderr)
