import json
import subprocess
import sys

import jsonschema
import pytest

from conftest import tiny_doc
from iotsentry import cli
from iotsentry.bench import load_report_schema

SCHEMA = load_report_schema()


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    report = json.loads(out) if code == 0 else None
    if report is not None:
        jsonschema.validate(report, SCHEMA)
    return code, report, err


def small_doc():
    inj = [{"kind": "GHOST_COMMAND", "device": "B1", "tick": t, "params": {"event": "turn_off"}}
           for t in range(200, 2800, 200)]
    inj.append({"kind": "COMPROMISED_INTERACTION", "device": "M1", "tick": 2900,
                "params": {"event": "motion_detected", "action_device": "B2", "action_event": "turn_on"}})
    return tiny_doc(duration_ticks=3000, injections=inj)


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "scenario.json").write_text(json.dumps(small_doc()))
    assert cli.main(["simulate", "--scenario", str(d / "scenario.json"), "--out", str(d / "run")]) == 0
    trace = d / "run" / "trace.jsonl"
    assert cli.main(["extract-signatures", "--trace", str(trace), "--out", str(d / "sigs.jsonl")]) == 0
    assert cli.main(["train", "--trace", str(trace), "--model-kind", "knn", "--k", "1",
                     "--out", str(d / "knn.json")]) == 0
    return d


def test_simulate_writes_artifacts(sim_dir, tmp_path, capsys):
    code, report, _ = run(["simulate", "--scenario", sim_dir / "scenario.json", "--out", tmp_path], capsys)
    assert code == 0
    for name in ("trace.jsonl", "ledger.jsonl", "truth.json", "devices.json", "rules.json", "scenario.json"):
        assert (tmp_path / name).exists()
    assert report["counts"]["anomalous"] == 13
    assert report["counts"]["injections"] == 14


def test_simulate_empty_builtin(tmp_path, capsys):
    code, report, _ = run(["simulate", "--scenario", "empty", "--out", tmp_path], capsys)
    assert code == 0 and report["counts"]["events"] == 0 and report["counts"]["packets"] == 0
    assert (tmp_path / "trace.jsonl").read_text() == ""


def test_simulate_is_deterministic(sim_dir, tmp_path, capsys):
    run(["simulate", "--scenario", sim_dir / "scenario.json", "--out", tmp_path / "a"], capsys)
    run(["simulate", "--scenario", sim_dir / "scenario.json", "--out", tmp_path / "b"], capsys)
    for name in ("trace.jsonl", "ledger.jsonl", "truth.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_train_report_has_metrics(sim_dir, tmp_path, capsys):
    code, report, _ = run(["train", "--trace", sim_dir / "run" / "trace.jsonl", "--model-kind", "dtree",
                           "--out", tmp_path / "m.json"], capsys)
    assert code == 0
    assert report["counts"]["train_rows"] + report["counts"]["test_rows"] == report["counts"]["rows"]
    assert 0.0 <= report["metrics"]["accuracy"] <= 1.0
    assert json.loads((tmp_path / "m.json").read_text())["kind"] == "dtree"


def test_detect_flags_ghosts(sim_dir, tmp_path, capsys):
    code, report, _ = run(["detect", "--trace", sim_dir / "run" / "trace.jsonl", "--model", sim_dir / "knn.json",
                           "--signatures", sim_dir / "sigs.jsonl", "--out", tmp_path], capsys)
    assert code == 0
    rows = [json.loads(x) for x in (tmp_path / "verdicts.jsonl").read_text().splitlines()]
    assert len(rows) == report["counts"]["events"]
    assert report["counts"]["anomalous"] == sum(r["verdict"] == "ANOMALOUS" for r in rows)
    ledger = [json.loads(x) for x in (tmp_path / "ledger.jsonl").read_text().splitlines()]
    assert sum(e["discarded"] for e in ledger) == report["counts"]["anomalous"]
    assert report["metrics"]["recall"] >= 0.9


def test_replay_rolls_back_and_matches_oracle(sim_dir, tmp_path, capsys):
    argv = ["replay", "--trace", sim_dir / "run" / "trace.jsonl", "--model", sim_dir / "knn.json",
            "--signatures", sim_dir / "sigs.jsonl", "--out", tmp_path / "a"]
    code, report, _ = run(argv, capsys)
    assert code == 0
    assert report["counts"]["rollbacks"] == 1
    assert report["counts"]["oracle_mismatches"] == 0
    assert report["rollbacks"][0]["isolated"] == "B2"
    final = json.loads((tmp_path / "a" / "final_state.json").read_text())
    assert final["B2"] == {"state": "off", "status": "ISOLATED"}
    assert (tmp_path / "a" / "interactions" / "M1.interactions.log").exists()
    assert (tmp_path / "a" / "logs" / "B1.log").exists()
    # replaying the same inputs gives the same verdicts
    argv[-1] = tmp_path / "b"
    run(argv, capsys)
    assert (tmp_path / "a" / "verdicts.jsonl").read_bytes() == (tmp_path / "b" / "verdicts.jsonl").read_bytes()


def test_config_digest_tracks_settings(sim_dir, tmp_path, capsys):
    base = ["replay", "--trace", sim_dir / "run" / "trace.jsonl", "--model", sim_dir / "knn.json",
            "--signatures", sim_dir / "sigs.jsonl", "--out", tmp_path]
    _, a, _ = run(base, capsys)
    _, b, _ = run(base, capsys)
    _, c, _ = run(base + ["--quiescence", "3"], capsys)
    assert a["config_digest"] == b["config_digest"] != c["config_digest"]


def test_missing_trace_is_io_error(tmp_path, capsys):
    code, _, err = run(["extract-signatures", "--trace", tmp_path / "nope.jsonl", "--registry", tmp_path / "x.json",
                        "--out", tmp_path / "s.jsonl"], capsys)
    assert code == 10 and err.startswith("error: io:")


def test_unknown_model_kind(sim_dir, tmp_path, capsys):
    code, _, err = run(["train", "--trace", sim_dir / "run" / "trace.jsonl", "--model-kind", "svm",
                        "--out", tmp_path / "m.json"], capsys)
    assert code == 5 and "MODEL_KIND_UNKNOWN" in err


def test_dimension_mismatch(sim_dir, tmp_path, capsys):
    doc = json.loads((sim_dir / "knn.json").read_text())
    doc["dim"] = 11
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    code, _, err = run(["detect", "--trace", sim_dir / "run" / "trace.jsonl", "--model", tmp_path / "bad.json",
                        "--signatures", sim_dir / "sigs.jsonl", "--out", tmp_path], capsys)
    assert code == 5 and "DIMENSION_MISMATCH" in err


def test_bench_needs_enough_events(sim_dir, capsys):
    code, _, err = run(["bench", "--trace", sim_dir / "run" / "trace.jsonl", "--model", sim_dir / "knn.json",
                        "--signatures", sim_dir / "sigs.jsonl"], capsys)
    assert code == 9 and "INSUFFICIENT_EVENTS" in err


def test_malformed_trace(tmp_path, sim_dir, capsys):
    (tmp_path / "t.jsonl").write_text("{oops\n")
    code, _, err = run(["extract-signatures", "--trace", tmp_path / "t.jsonl",
                        "--registry", sim_dir / "run" / "devices.json", "--ledger", sim_dir / "run" / "ledger.jsonl",
                        "--out", tmp_path / "s.jsonl"], capsys)
    assert code == 3 and "PARSE_ERROR" in err


def test_isolate_and_reactivate(sim_dir, tmp_path, capsys):
    reg = sim_dir / "run" / "devices.json"
    code, report, _ = run(["isolate", "--registry", reg, "--device", "B1", "--out", tmp_path / "r.json"], capsys)
    assert code == 0 and report["counts"]["isolated"] == 1
    assert json.loads(reg.read_text()) != json.loads((tmp_path / "r.json").read_text())
    code, report, _ = run(["reactivate", "--registry", tmp_path / "r.json", "--device", "B1"], capsys)
    assert code == 0 and report["counts"]["isolated"] == 0
    code, _, err = run(["isolate", "--registry", reg, "--device", "ZZ", "--out", tmp_path / "r.json"], capsys)
    assert code == 6 and "UNKNOWN_DEVICE" in err


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "iotsentry.cli", "simulate", "--scenario", "empty",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["command"] == "simulate"
