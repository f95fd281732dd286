"""Command line: exit codes, outputs and report emission."""
import csv
import json
import os
import subprocess
import sys

import pytest

from conftest import write_window
from gridtwin.cli import main


def _args(fx, *extra):
    d, net, meas = fx
    return ["--network", str(net), "--measurements", str(meas), *extra]


@pytest.fixture(scope="module")
def overvoltage_window(tmp_path_factory):
    # slack regulated at 1.06 p.u.: every bus near the slack is above the 1.05 band
    d = tmp_path_factory.mktemp("ov")
    net, meas = write_window(d, 1, "2024-06-01", vm_ext_pu=1.06)
    return d, net, meas


@pytest.fixture(scope="module")
def plus20_violation(summer_run):
    out, _ = summer_run
    with open(out / "violations.jsonl") as fh:
        recs = [json.loads(line) for line in fh]
    stamps = [r["timestamp"] for r in recs if r["scenario"] == "plus20"]
    assert stamps
    return stamps[0]


def test_validate_ok(small_fixture, capsys):
    assert main(["validate", *_args(small_fixture)]) == 0
    out = capsys.readouterr().out
    assert "33 buses" in out and "ok" in out


def test_validate_network_only(small_fixture):
    d, net, _ = small_fixture
    assert main(["validate", "--network", str(net)]) == 0


def test_validate_bad_network(tmp_path, small_fixture, capsys):
    doc = json.loads(small_fixture[1].read_text())
    doc["lines"][0]["max_i_ka"] = -1
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    assert main(["validate", "--network", str(p)]) == 3
    assert "data error" in capsys.readouterr().err


def test_validate_unknown_substation(tmp_path, small_fixture):
    m = tmp_path / "m.csv"
    m.write_text("timestamp,substation_id,feeder_id,injected_kw,withdrawn_kw\n"
                 "2025-01-01T00:00:00Z,NOPE,F1,1.0,2.0\n")
    assert main(["validate", "--network", str(small_fixture[1]), "--measurements", str(m)]) == 3


def test_usage_errors(small_fixture, capsys):
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["powerflow", *_args(small_fixture)]) == 2
    assert main(["redispatch", *_args(small_fixture)]) == 2
    assert main(["report"]) == 2
    assert main(["assess", *_args(small_fixture), "--scale", "-1"]) == 2
    assert main(["assess", *_args(small_fixture), "--jobs", "0"]) == 2


def test_missing_paths_are_data_errors(tmp_path):
    assert main(["validate", "--network", str(tmp_path / "none.json")]) == 3
    assert main(["validate"]) == 3
    assert main(["report", "--run", str(tmp_path)]) == 3


def test_bad_timestamp_is_data_error(small_fixture, capsys):
    assert main(["powerflow", *_args(small_fixture), "--at", "1999-01-01T00:00Z"]) == 3
    assert "not in series" in capsys.readouterr().err


def test_powerflow_json(small_fixture, capsys):
    assert main(["powerflow", *_args(small_fixture), "--at", "2025-01-02T12:00Z"]) == 0
    sol = json.loads(capsys.readouterr().out)
    assert sol["timestamp"] == "2025-01-02T12:00:00Z"
    assert sol["max_mismatch_pu"] <= 1e-8
    assert len(sol["buses"]) == 33
    assert sol["buses"][0] == {"bus": 0, "vm_pu": 1.02, "va_deg": 0.0}


def test_powerflow_to_file(small_fixture, tmp_path):
    assert main(["powerflow", *_args(small_fixture), "--at", "2025-01-02T12:00Z",
                 "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "powerflow.json").read_text())["max_mismatch_pu"] <= 1e-8


def test_assess_engineered_overvoltage(overvoltage_window, tmp_path, capsys):
    args = ["assess", *_args(overvoltage_window), "--at", "2024-06-01T12:00Z"]
    assert main(args + ["--out", str(tmp_path)]) == 1
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    assert lines[0].startswith("2024-06-01T12:00:00Z") and "overvoltage" in lines[0]
    assert "1 with violations" in lines[1]
    rec = json.loads((tmp_path / "violations.jsonl").read_text().splitlines()[0])
    assert rec["timestamp"] == "2024-06-01T12:00:00Z"
    assert main(args + ["--no-check"]) == 0


def test_assess_clean_horizon(small_fixture, capsys):
    assert main(["assess", *_args(small_fixture)]) == 0
    assert "288 timestamp(s): 0 with violations" in capsys.readouterr().out


def test_contingency_single_element(small_fixture, tmp_path, capsys):
    rc = main(["contingency", *_args(small_fixture), "--at", "2025-01-02T12:00Z",
               "--contingency", "line:3", "--out", str(tmp_path), "--all-cases"])
    assert rc in (0, 1)
    out = capsys.readouterr().out
    assert out.startswith("line:3:")
    with open(tmp_path / "contingency_summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["element"] for r in rows] == ["line:3"]
    assert len((tmp_path / "contingencies.jsonl").read_text().splitlines()) == 1


def test_contingency_unknown_element(small_fixture):
    assert main(["contingency", *_args(small_fixture), "--at", "2025-01-02T12:00Z",
                 "--contingency", "line:999"]) == 3


def test_contingency_full_sweep_counts(small_fixture, capsys):
    rc = main(["contingency", *_args(small_fixture), "--at", "2025-01-02T12:00Z", "--no-check"])
    assert rc == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 39


def test_redispatch_corrective(summer_window, plus20_violation, tmp_path, capsys):
    rc = main(["redispatch", *_args(summer_window), "--at", plus20_violation, "--scale", "1.2",
               "--out", str(tmp_path)])
    doc = json.loads((tmp_path / "setpoints.json").read_text())
    assert doc["mode"] == "corrective" and doc["timestamp"] == plus20_violation
    assert rc == {"optimal": 0, "infeasible": 1}.get(doc["status"], 4)
    assert doc["status"] in capsys.readouterr().err


def test_redispatch_matches_run(summer_run, summer_window, plus20_violation, tmp_path):
    out, _ = summer_run
    run_doc = json.loads((out / "setpoints" / "plus20.json").read_text())
    ref = {s["timestamp"]: s for s in run_doc["corrective"]}
    optimal = [t for t, s in ref.items() if s["status"] == "optimal"]
    at = optimal[0]
    assert main(["redispatch", *_args(summer_window), "--at", at, "--scale", "1.2",
                 "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "setpoints.json").read_text())
    assert doc["objective"] == pytest.approx(ref[at]["objective"], rel=1e-9)


def test_redispatch_preventive(summer_window, tmp_path):
    rc = main(["redispatch", *_args(summer_window), "--at", "2025-06-10T12:00Z",
               "--contingency", "line:5", "--out", str(tmp_path)])
    doc = json.loads((tmp_path / "setpoints.json").read_text())
    assert doc["mode"] == "preventive:line:5"
    assert rc == {"optimal": 0, "infeasible": 1}.get(doc["status"], 4)


def test_redispatch_degenerate_outage(summer_window, tmp_path, capsys):
    # line:0 feeds the whole network from the slack
    rc = main(["redispatch", *_args(summer_window), "--at", "2025-06-10T12:00Z",
               "--contingency", "line:0", "--out", str(tmp_path)])
    assert rc == 1 and "degenerate" in capsys.readouterr().err
    assert not (tmp_path / "setpoints.json").exists()


def test_run_and_report(small_fixture, tmp_path, capsys):
    run_dir = tmp_path / "run"
    assert main(["run", *_args(small_fixture), "--out", str(run_dir)]) == 0
    assert (run_dir / "metrics.json").exists()
    assert main(["report", "--run", str(run_dir)]) == 0
    with open(run_dir / "report" / "voltage_envelope.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["bus", "min_v", "max_v"]
    assert len(rows) == 34
    for bus, lo, hi in rows[1:]:
        assert float(lo) <= float(hi)
    assert main(["report", "--run", str(run_dir), "--scenario", "nope"]) == 3


def test_run_is_reproducible(small_fixture, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", *_args(small_fixture), "--out", str(a)]) == 0
    assert main(["run", *_args(small_fixture), "--out", str(b)]) == 0
    for name in ("metrics.json", "import_comparison.csv", "deltas.csv", "violations.jsonl",
                 "contingencies.jsonl", "bus_voltage_extremes.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_config_file_and_flag_override(small_fixture, tmp_path):
    d, net, meas = small_fixture
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"network": str(net), "measurements": str(meas), "out": "from_cfg",
                               "scenarios": [{"name": "only", "load_scale": 1.0}]}))
    assert main(["run", "--config", str(cfg)]) == 0
    m = json.loads((tmp_path / "from_cfg" / "metrics.json").read_text())
    assert [s["name"] for s in m["scenarios"]] == ["only"]
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "metrics.json").exists()


def test_bad_config_is_data_error(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["run", "--config", str(cfg)]) == 3


def test_console_entry_point(small_fixture):
    env = dict(os.environ, GRIDTWIN_NUMBA="0")
    r = subprocess.run([sys.executable, "-m", "gridtwin.cli", "validate", *_args(small_fixture)],
                       capture_output=True, text=True, env=env, timeout=120)
    assert r.returncode == 0, r.stderr
