import csv
import json
import subprocess
import sys

import pytest

from simgap.cli import main
from simgap.dataset import load_run

CONFIG = {
    "scenarios": [{"kind": "line", "duration": 4.0, "name": "line"}, {"kind": "circle", "duration": 4.0, "name": "circle"}],
    "variants": [{"label": "ChGauss", "variant": "ChGauss"}, {"label": "ChRW", "variant": "ChRW"}],
    "K": 2,
}


@pytest.fixture()
def config_file(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(CONFIG))
    return p


@pytest.fixture()
def simulated(tmp_path, config_file):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(config_file), "--out", str(out)]) == 0
    return out


def test_run_writes_report(tmp_path, config_file, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(config_file), "--out", str(out), "--seed", "3"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["config"]["master_seed"] == 3
    assert set(rep["variants"]) == {"ChGauss", "ChRW"}
    assert "VEPD=" in capsys.readouterr().out
    rows = list(csv.reader(open(out / "table_vepd.csv")))
    assert rows[0][:4] == ["variant", "w1", "w2", "vepd"] and len(rows) == 3


def test_run_with_workers_matches_serial(tmp_path, config_file):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(config_file), "--out", str(a)]) == 0
    assert main(["run", "--config", str(config_file), "--out", str(b), "--workers", "2"]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()


def test_simulate_then_metrics_vepd_report(tmp_path, config_file, simulated, capsys):
    runs = simulated / "runs"
    assert len(list(runs.rglob("*.jsonl"))) == 3 * 2 * 2

    out_csv = tmp_path / "m.csv"
    assert main(["metrics", "--runs", str(runs / "ChRW"), "-o", str(out_csv)]) == 0
    rows = list(csv.DictReader(open(out_csv)))
    assert len(rows) == 4 and all(float(r["rmse"]) >= 0 for r in rows)

    out_json = tmp_path / "v.json"
    assert main(["vepd", "--reference", str(runs / "pseudo-real"), "--sim", str(runs / "ChRW"), "-o", str(out_json)]) == 0
    v = json.loads(out_json.read_text())
    assert v["vepd"] == (v["w1"] + v["w2"]) / 2
    assert set(v["per_scenario"]) == {"line", "circle"}

    rep_dir = tmp_path / "rep"
    assert main(["report", "--config", str(config_file), "--runs", str(runs), "--out", str(rep_dir)]) == 0
    rebuilt = json.loads((rep_dir / "report.json").read_text())
    direct = tmp_path / "direct"
    main(["run", "--config", str(config_file), "--out", str(direct)])
    original = json.loads((direct / "report.json").read_text())
    assert rebuilt["variants"] == original["variants"]


def test_estimate_rewrites_estimate_channel(simulated):
    path = sorted((simulated / "runs").rglob("*.jsonl"))[0]
    before = load_run(path)
    assert main(["estimate", "--runs", str(path.parent)]) == 0
    after = load_run(path)
    assert after.estimate == before.estimate


def test_replay(simulated, capsys):
    assert main(["replay", "--reference", str(simulated / "runs" / "pseudo-real")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert len(out["recorded"]) == len(out["replayed"]) == 4


def test_invalid_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"K": 0}))
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "K" in capsys.readouterr().err


def test_missing_logs_exit_code(tmp_path):
    assert main(["replay", "--reference", str(tmp_path / "nothing")]) == 2


def test_run_failure_exit_code(tmp_path):
    cfg = dict(CONFIG, variants=[{"label": "bad", "variant": "ChRW", "overrides": {"rw": {"sigma_a": 1e9, "p_max": 1e9}}}])
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 1


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "simgap.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("run", "simulate", "estimate", "metrics", "vepd", "replay", "report"):
        assert cmd in r.stdout
