"""End-to-end command-line workflows."""

import json
import shutil
import subprocess

import pytest

from locktime.cli import main
from locktime.netlist import parse_bench


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def run_json(capsys, *argv):
    code, out, err = run_cli(capsys, *argv)
    assert code == 0, err
    return json.loads(out)


# --- parse ---

def test_parse_builtin_summary(capsys):
    doc = run_json(capsys, "parse", "builtin:c17")
    assert doc["nodes"] == 11
    assert doc["logic_gates"] == 6
    assert doc["type_counts"] == {"NAND": 6}
    assert doc["primary_inputs"] == ["1", "2", "3", "6", "7"]
    assert doc["primary_outputs"] == ["22", "23"]
    assert doc["key_bits"] == 0
    assert doc["depth"] == 3


def test_parse_emit_round_trip(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "parse", "builtin:mid12", "--emit")
    assert code == 0
    c = parse_bench(out)
    assert len(c.primary_inputs) == 12
    assert len(c.primary_outputs) == 17


def test_parse_missing_file_is_json_error(capsys):
    code, out, err = run_cli(capsys, "parse", "/nonexistent/x.bench")
    assert code == 1 and out == ""
    doc = json.loads(err)
    assert doc["error"] == "FileNotFoundError"


def test_parse_bad_netlist_reports_line(capsys, tmp_path):
    bad = tmp_path / "bad.bench"
    bad.write_text("INPUT(a)\nz = FROB(a)\nOUTPUT(z)\n")
    code, _, err = run_cli(capsys, "parse", str(bad))
    assert code == 1
    doc = json.loads(err)
    assert doc["error"] == "BenchParseError"
    assert "line 2" in doc["message"]


# --- obfuscate / attack / export-dimacs ---

@pytest.fixture()
def locked_dir(tmp_path, capsys):
    doc = run_json(capsys, "obfuscate", "builtin:c17", "--kind", "xnor",
                   "--locations", "2", "--seed", "3",
                   "--out", str(tmp_path / "inst"))
    return tmp_path / "inst", doc


def test_obfuscate_outputs(locked_dir, capsys):
    outdir, doc = locked_dir
    assert doc["kind"] == "xnor" and doc["key_bits"] == 2
    assert doc["key_truth"] == "11"  # xnor key-gates are transparent at 1
    assert len(doc["locations"]) == 2
    for name in ("instance.json", "locked.bench", "base.bench"):
        assert (outdir / name).exists()
    locked = parse_bench((outdir / "locked.bench").read_text())
    assert locked.key_bits == 2
    # same seed reproduces the same instance
    again = run_json(capsys, "obfuscate", "builtin:c17", "--kind", "xnor",
                     "--locations", "2", "--seed", "3",
                     "--out", str(outdir.parent / "inst2"))
    assert again["locations"] == doc["locations"]


def test_attack_recovers_key(locked_dir, capsys):
    outdir, doc = locked_dir
    res = run_json(capsys, "attack", str(outdir / "instance.json"))
    assert res["status"] == "SOLVED"
    assert len(res["recovered_key"]) == 2
    assert res["iterations"] >= 0 and res["conflicts"] >= 0
    assert set(res["labels"]) == {"wall_seconds", "log1p_seconds",
                                  "conflicts", "log1p_conflicts"}
    assert res["labels"]["conflicts"] == res["conflicts"]


def test_export_dimacs_circuit_and_miter(locked_dir, capsys, tmp_path):
    outdir, _ = locked_dir
    code, out, _ = run_cli(capsys, "export-dimacs", "builtin:c17")
    assert code == 0
    header = out.splitlines()[0].split()
    assert header[:2] == ["p", "cnf"]
    n_circuit_vars = int(header[2])
    assert n_circuit_vars == 11  # nets are contiguous: one var per net
    code, out2, _ = run_cli(capsys, "export-dimacs",
                            str(outdir / "instance.json"), "--what", "miter")
    assert code == 0
    header2 = out2.splitlines()[0].split()
    assert int(header2[2]) > 2 * n_circuit_vars  # two key copies + diff vars
    target = tmp_path / "f.cnf"
    code, _, _ = run_cli(capsys, "export-dimacs", "builtin:c17",
                         "--out", str(target))
    assert code == 0 and target.read_text() == out


# --- dataset / train / eval / report pipeline ---

@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    ds = root / "ds"
    code = main(["gen-data", "builtin:c17", "--count", "8", "--kind", "lut2",
                 "--locations", "1:3", "--seed", "1", "--out", str(ds)])
    assert code == 0
    cfg = root / "config.json"
    cfg.write_text(json.dumps({"hidden_dims": [6, 3], "max_epochs": 15,
                               "learning_rate": 0.02, "batch_size": 4}))
    model = root / "model.json"
    log = root / "log.csv"
    code = main(["train", "--dataset", str(ds), "--label-kind", "conflicts",
                 "--config", str(cfg), "--out", str(model),
                 "--log-csv", str(log)])
    assert code == 0
    return ds, model, log, cfg


def test_gen_data_manifest(pipeline, capsys):
    ds, *_ = pipeline
    manifest = json.loads((ds / "manifest.json").read_text())
    assert manifest["count"] == 8
    assert manifest["kind"] == "lut2"
    assert manifest["location_range"] == [1, 3]
    assert len(list((ds / "instances").glob("*.json"))) == 8
    assert (ds / "attacks.log.jsonl").exists()


def test_train_artifacts(pipeline, capsys):
    ds, model, log, _ = pipeline
    doc = json.loads(model.read_text())
    assert doc["format"] == "icnet-checkpoint"
    assert doc["config"]["hidden_dims"] == [6, 3]
    lines = log.read_text().splitlines()
    assert lines[0] == "epoch,train_mse,val_mse,wall_seconds"
    assert len(lines) >= 2


def test_eval_reports_metrics(pipeline, capsys):
    ds, model, *_ = pipeline
    doc = run_json(capsys, "eval", "--dataset", str(ds),
                   "--model", str(model), "--label-kind", "conflicts")
    assert doc["split"] == "test"
    assert doc["n"] >= 1
    assert "mse" in doc and doc["mse"] >= 0
    all_doc = run_json(capsys, "eval", "--dataset", str(ds),
                       "--model", str(model), "--split", "all")
    assert all_doc["n"] == 8


def test_report_with_attention(pipeline, capsys):
    ds, model, *_ = pipeline
    doc = run_json(capsys, "report", "--dataset", str(ds))
    assert doc["dataset"]["count"] == 8
    assert "attention" not in doc
    doc = run_json(capsys, "report", "--dataset", str(ds),
                   "--model", str(model))
    assert "mask" in doc["attention"]["input_shares"]
    assert doc["attention"]["gate_entropy"] is None or \
        0 <= doc["attention"]["gate_entropy"] <= 1


def test_train_rejects_unknown_config_keys(pipeline, capsys, tmp_path):
    ds, *_ = pipeline
    bad = tmp_path / "bad.json"
    bad.write_text('{"hidden_dims": [4, 2], "dropout": 0.5}')
    code, _, err = run_cli(capsys, "train", "--dataset", str(ds),
                           "--config", str(bad),
                           "--out", str(tmp_path / "m.json"))
    assert code == 1
    assert "dropout" in json.loads(err)["message"]


def test_gen_data_requires_out(capsys):
    code, _, err = run_cli(capsys, "gen-data", "builtin:c17", "--count", "1",
                           "--kind", "xor", "--locations", "1")
    assert code == 1
    assert "--out" in json.loads(err)["message"]


def test_console_script_installed():
    exe = shutil.which("locktime")
    if exe is None:
        pytest.skip("console script not on PATH")
    out = subprocess.run([exe, "parse", "builtin:c17"],
                         capture_output=True, text=True, timeout=60)
    assert out.returncode == 0
    assert json.loads(out.stdout)["nodes"] == 11
