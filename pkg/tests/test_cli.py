import io
import json
from pathlib import Path

import pytest

from microlab.cli import main

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = ROOT / "scenarios" / "golden.yaml"


def call(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out)
    return code, out.getvalue()


def test_run_golden(tmp_path):
    code, text = call("run", GOLDEN, "--out", tmp_path, "--oracle")
    assert code == 0
    assert "checks passed" in text
    names = {p.name for p in tmp_path.iterdir()}
    assert {"summary.json", "timing.json", "expectations.csv", "reduced.csv"} <= names
    assert json.loads((tmp_path / "timing.json").read_text())["seconds"] > 0


def test_run_summary_only(tmp_path):
    code, _ = call("run", GOLDEN, "--out", tmp_path, "--format", "summary")
    assert code == 0
    assert not list(tmp_path.glob("*.csv"))


def test_failing_check_exit_one(tmp_path):
    sc = tmp_path / "strict.yaml"
    sc.write_text("tolerances: {lindblad_trace_drift: 1.0e-300, lindblad_positivity: 1.0e-300}\n"
                  "lindblad: {model: thermal, method: rk4}\n")
    code, text = call("run", sc, "--out", tmp_path / "o")
    assert code == 1 and "FAIL" in text


def test_config_error_exit_two(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("transfer:\n  channels:\n    - {to: 9, from: 1, amplitude: 0.1}\n")
    assert call("validate", bad)[0] == 2
    assert "out of range" in capsys.readouterr().err
    assert call("run", bad, "--out", tmp_path / "o")[0] == 2
    assert call("run", GOLDEN, "--out", tmp_path / "o", "--seed", -1)[0] == 2


def test_usage_error_exit_two():
    with pytest.raises(SystemExit) as exc:
        main(["run", str(GOLDEN)])
    assert exc.value.code == 2


def test_stage_failure_exit_one(tmp_path, capsys):
    sc = tmp_path / "overflow.yaml"
    sc.write_text("state2: {zeta: {number: -900.0, energy: 0.0}}\n")
    assert call("run", sc, "--out", tmp_path / "o")[0] == 1
    assert "stage 'states'" in capsys.readouterr().err


def test_validate_reports_digest_and_dimension():
    code, text = call("validate", GOLDEN)
    assert code == 0
    assert "8b2b94e765410010338e66918676e8fd9c4c469ea1394260ace3f9ec72c753b8" in text
    assert "dimension estimate: 40" in text


def test_dimension_cap_override(monkeypatch, capsys):
    monkeypatch.setenv("MICROLAB_MAX_DIM", "16")
    assert call("validate", GOLDEN)[0] == 2
    assert "exceeds the cap 16" in capsys.readouterr().err


def test_list_checks():
    code, text = call("list-checks")
    assert code == 0
    assert "mixture_equivalence" in text and "[oracle]" in text
