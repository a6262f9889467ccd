import json
import subprocess
import sys

import pytest
from conftest import CASES

from derplan.cli import run

TOY = str(CASES / "toy5.json")


def test_validate_ok(capsys):
    assert run(["validate", TOY]) == 0
    assert "ok" in capsys.readouterr().out


def test_validate_reports_problems(tmp_path, capsys):
    doc = json.loads((CASES / "toy5.json").read_text())
    doc["tech"]["soc_min"], doc["tech"]["soc_max"] = 0.9, 0.2
    doc["uncertainty"]["pv"]["history"] = {"csv": str(CASES / "toy5_pv_history.csv")}
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert run(["validate", str(bad)]) == 2
    assert "soc bounds inverted" in capsys.readouterr().out


def test_missing_case_exit_code(tmp_path):
    assert run(["solve", "det", str(tmp_path / "none.json")]) == 2


def test_bad_options_exit_code(tmp_path):
    assert run(["solve", "det", TOY, "--horizon", "99"]) == 2
    assert run(["sweep", TOY, "--betas", "a,b"]) == 2
    assert run(["solve", "aro", TOY, "--horizon", "4", "--beta-pl", "9"]) == 2
    with pytest.raises(SystemExit) as exc:
        run(["solve", "nonsense", TOY])
    assert exc.value.code == 2


def test_solve_writes_reports(tmp_path, capsys):
    out = tmp_path / "o"
    assert run(["solve", "aro", TOY, "--horizon", "4", "--beta-pl", "1", "--beta-pv", "1", "--out", str(out)]) == 0
    assert (out / "report.csv").read_text().startswith("case,formulation,beta_pl")
    rows = json.loads((out / "report.json").read_text())["rows"]
    assert rows[0]["formulation"] == "aro" and rows[0]["status"] == "converged"
    trace = [json.loads(line) for line in (out / "trace_aro.jsonl").read_text().splitlines()]
    assert trace and {"iter", "lb", "ub", "mp_time_s", "dsp_time_s", "u_star_digest"} <= set(trace[0])
    assert "objective" in capsys.readouterr().out


def test_iteration_cap_exit_code():
    code = run(["solve", "aro", TOY, "--horizon", "4", "--beta-pl", "2", "--beta-pv", "2", "--max-iter", "1"])
    assert code == 4  # one iteration cannot certify a non-trivial budget


def test_sweep_deterministic(tmp_path):
    args = ["sweep", TOY, "--horizon", "4", "--betas", "0,1"]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("sweep.csv", "sweep.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_pi_and_autonomy(tmp_path):
    assert run(["pi", TOY, "--horizon", "4", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "pi.csv").read_text().splitlines()
    assert lines[0].startswith("plan,realized_cost") and len(lines) == 7
    assert run(["autonomy", TOY, "--horizon", "4", "--levels", "0,0.5", "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "autonomy.csv").read_text().splitlines()) == 3


def test_oracle_check_passes(capsys):
    assert run(["oracle-check", TOY, "--check-horizon", "2", "--beta", "1"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4 and "FAIL" not in out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "derplan", "validate", TOY], capture_output=True, text=True)
    assert res.returncode == 0 and "ok" in res.stdout
