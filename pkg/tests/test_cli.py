from __future__ import annotations

import json
import shutil
import subprocess

import pytest

from sgnmg.cli import main


def call(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), err


@pytest.fixture
def ppf_dir(tmp_path, capsys):
    d = tmp_path / "ppf"
    code, out, _ = call(capsys, "generate", "ppf", d, "--n", 3, "--seed", 2)
    assert code == 0 and out["written"] == 3
    return d


def test_generate_then_suite(capsys, ppf_dir, tmp_path):
    code, out, _ = call(capsys, "suite", ppf_dir, "--out", tmp_path / "o", "--format", "json")
    assert code == 0
    assert out["scenarios"] == 3 and out["missed_faults"] == 0
    assert (tmp_path / "o" / "ppf_000" / "trace.json").exists()
    assert (tmp_path / "o" / "kpis.csv").exists()


def test_run_single_spec(capsys, ppf_dir, tmp_path):
    spec = sorted(ppf_dir.glob("*.yaml"))[0]
    code, out, _ = call(capsys, "run", spec, "--controller", "droop-only",
                        "--out", tmp_path / "r", "--format", "svg")
    assert code == 0 and out["controller"] == "droop-only"
    assert (tmp_path / "r" / "frequency.svg").exists()


def test_train_then_eval(capsys, tmp_path):
    d = tmp_path / "sep"
    call(capsys, "generate", "separable", d, "--n", 6, "--seed", 1)
    pol = tmp_path / "p" / "policy.json"
    code, out, _ = call(capsys, "train", d, "--episodes", 12, "--seed", 4, "--policy-out", pol)
    assert code == 0 and out["episodes"] == 12 and pol.exists()
    code, out, _ = call(capsys, "eval", d, "--policy", pol, "--out", tmp_path / "e")
    assert code == 0 and 0.0 <= out["accuracy"] <= 1.0
    assert (tmp_path / "e" / "evaluation.json").exists()


def test_compare(capsys, ppf_dir, tmp_path):
    code, out, _ = call(capsys, "compare", ppf_dir, "--controllers", "droop-only,sg-nmg",
                        "--out", tmp_path / "c", "--format", "svg")
    assert code == 0 and out["baseline"] == "droop-only"
    assert out["deltas"]["sg-nmg"]["missed_faults"] < 0
    for name in ("comparison.csv", "comparison.json", "comparison.svg"):
        assert (tmp_path / "c" / name).exists()


def test_errors_are_machine_readable(capsys, tmp_path):
    code, out, err = call(capsys, "suite", tmp_path / "missing")
    assert code == 1 and out is None
    record = json.loads(err)
    assert record["error"] == "FileNotFoundError" and record["command"] == "suite"


def test_unknown_controller_in_compare(capsys, ppf_dir):
    code, _, err = call(capsys, "compare", ppf_dir, "--controllers", "sg-nmg,magic")
    assert code == 1 and "magic" in json.loads(err)["message"]


def test_bad_flag_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["suite", "x", "--format", "pdf"])
    assert exc.value.code == 2


@pytest.mark.skipif(shutil.which("sgnmg") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(["sgnmg", "generate", "ppi", str(tmp_path), "--n", "2"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["written"] == 2
