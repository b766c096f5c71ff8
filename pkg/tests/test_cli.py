import csv
import json
import os
import subprocess
import sys

import pytest

from mmtail import cli


def _run(args):
    return cli.main(args)


def _model(models_dir, name):
    return os.path.join(models_dir, name + ".json")


def test_validate_ok(models_dir, tmp_path, capsys):
    assert _run(["validate", "--model", _model(models_dir, "model_a"), "--out-dir", str(tmp_path)]) == 0
    assert capsys.readouterr().out.strip() == "ok"
    assert (tmp_path / "manifest.json").exists()


def test_invalid_model_exit_2(tmp_path, capsys):
    doc = json.load(open(os.path.join(os.path.dirname(__file__), "..", "models", "model_a.json")))
    doc["transitions"][0]["prob"] = 1.4
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert _run(["validate", "--model", str(path), "--out-dir", str(tmp_path)]) == 2
    assert "row sum" in capsys.readouterr().err
    path.write_text("{not json")
    assert _run(["analyze", "--model", str(path), "--out-dir", str(tmp_path)]) == 2
    assert _run(["analyze", "--model", str(tmp_path / "missing.json"), "--out-dir", str(tmp_path)]) == 2
    path.write_text(json.dumps({"states": ["a"], "transitions": [{"from": 0, "to": 3, "prob": 1, "atoms": []}],
                                "c_xi": 1, "c_rho": 2}))
    assert _run(["validate", "--model", str(path), "--out-dir", str(tmp_path)]) == 2


def test_no_sign_change_exit_3(models_dir, tmp_path, capsys):
    assert _run(["analyze", "--model", _model(models_dir, "contractive_single"), "--out-dir", str(tmp_path)]) == 3
    assert "no sign change" in capsys.readouterr().err


def test_divergence_exit_4(models_dir, tmp_path, capsys):
    code = _run(["simulate", "--model", _model(models_dir, "model_b"), "--out-dir", str(tmp_path),
                 "--n", "2000", "--eps", "1e-3", "--min-terms", "500", "--max-terms", "1000"])
    assert code == 4
    assert "runtime failure" in capsys.readouterr().err


def test_analyze_outputs(models_dir, tmp_path):
    assert _run(["analyze", "--model", _model(models_dir, "model_b"), "--out-dir", str(tmp_path), "--quiet"]) == 0
    doc = json.loads((tmp_path / "analyze.json").read_text())
    assert set(doc) >= {"beta_grid", "kappa", "h", "tilted_transition", "pi_h", "drift"}
    rows = list(csv.reader(open(tmp_path / "lambda.csv")))
    assert rows[0] == ["beta", "lambda"] and len(rows) == 42


def test_check_summary(models_dir, tmp_path, capsys):
    assert _run(["check", "--model", _model(models_dir, "model_d"), "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "period: 1" and out[2] == "degenerate: yes (Gamma = 3)"
    assert json.loads((tmp_path / "check.json").read_text())["degenerate"] is True


def test_simulate_then_tails(models_dir, tmp_path):
    model = _model(models_dir, "model_a_prime")
    assert _run(["simulate", "--model", model, "--out-dir", str(tmp_path), "--n", "20000", "--seed", "3",
                 "--out", "s.npy", "--quiet"]) == 0
    assert _run(["tails", "--model", model, "--out-dir", str(tmp_path), "--samples", str(tmp_path / "s.npy"),
                 "--t-grid", "1:1000:25", "--sym-samples", "1000", "--quiet"]) == 0
    rows = list(csv.reader(open(tmp_path / "tails.csv")))
    assert rows[0] == ["state", "sign", "t", "t_kappa_surv", "band_lo", "band_hi"]
    assert len(rows) == 1 + 2 * 25
    const = json.loads((tmp_path / "constants.json").read_text())
    assert const["formula"]["branch"] == "mixed-G"
    assert "K1" in const["plateau"][0] and "K_1neg" in const["plateau"][0]
    assert _run(["tails", "--model", model, "--out-dir", str(tmp_path), "--samples", str(tmp_path / "s.npy"),
                 "--kappa", "1.0", "--t-grid", "1,10,100", "--sym-samples", "0", "--quiet"]) == 0


def test_simulate_csv(models_dir, tmp_path):
    assert _run(["simulate", "--model", _model(models_dir, "model_b"), "--out-dir", str(tmp_path), "--n", "10",
                 "--quiet"]) == 0
    lines = (tmp_path / "samples.csv").read_text().splitlines()
    assert lines[0] == "state,index,R,xi0,rho0,terms" and len(lines) == 21


def test_report_degenerate(models_dir, tmp_path):
    assert _run(["report", "--model", _model(models_dir, "model_d"), "--out-dir", str(tmp_path), "--n", "5000",
                 "--sym-samples", "1000", "--quiet"]) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["degenerate"] is True and isinstance(s["constants"], str) and s["hill"] is None


def test_report_compares(models_dir, tmp_path):
    assert _run(["report", "--model", _model(models_dir, "model_a"), "--out-dir", str(tmp_path), "--n", "20000",
                 "--sym-samples", "1000", "--quiet"]) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["constants"]["branch"] == "positive"
    assert s["hill"]["k"] > 0 and "hill_contains_kappa" in s


def test_manifest_replay_byte_identical(models_dir, tmp_path):
    a = tmp_path / "a"
    assert _run(["report", "--model", _model(models_dir, "model_b"), "--out-dir", str(a), "--n", "5000",
                 "--seed", "11", "--eps", "auto", "--sym-samples", "500", "--workers", "2", "--quiet"]) == 0
    b = tmp_path / "b"
    assert _run(["replay", str(a / "manifest.json"), "--out-dir", str(b), "--quiet"]) == 0
    names = sorted(os.listdir(a))
    assert names == sorted(os.listdir(b))
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes(), n
    man = json.loads((a / "manifest.json").read_text())
    assert man["config"]["seed"] == 11 and man["config"]["eps"] == "auto"
    assert len(man["model_sha256"]) == 64 and "versions" in man


def test_module_entry_point(models_dir, tmp_path):
    out = subprocess.run([sys.executable, "-m", "mmtail", "validate", "--model", _model(models_dir, "model_b"),
                          "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip() == "ok"


def test_model_doc_roundtrip():
    from mmtail import fixtures

    m = fixtures.model_b()
    back = cli.parse_model(cli.model_to_doc(m))
    assert (back.transition == m.transition).all() and back.states == m.states
    with pytest.raises(Exception):
        cli.parse_model({"states": []})
