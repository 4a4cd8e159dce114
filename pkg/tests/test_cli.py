import subprocess
import sys

from smiri.cli import main
from smiri.rstar import load_table


def test_precompute_and_report(tmp_path, capsys):
    out = tmp_path / "t.npz"
    assert main(["precompute", "--case", "6", "--out", str(out), "--dp-csv"]) == 0
    table = load_table(out)
    assert table.C_max == 70 and table.failure_time == "literal"
    assert (tmp_path / "t_dp.csv").exists()
    assert "E[C_opt]" in capsys.readouterr().out


def test_precompute_into_directory(tmp_path):
    assert main(["precompute", "--case", "6", "--out", str(tmp_path), "--failure-time", "scaled"]) == 0
    t = load_table(tmp_path / "rstar_case6_scaled.npz")
    assert t.failure_time == "scaled"


def test_validate_prints_table(capsys):
    assert main(["validate", "--case", "5", "--samples", "2000", "--max-c", "3", "--max-x", "2"]) == 0
    text = capsys.readouterr().out
    assert "(2, 1, 0)" in text and "pass" in text and "0 failed" in text


def test_run_then_report(tmp_path, capsys):
    out = tmp_path / "bench"
    assert main(["run", "--case", "6", "--instances", "4", "--algo", "SMIRI", "--algo", "APTS",
                 "--out", str(out)]) == 0
    first = capsys.readouterr().out
    assert "SMIRI" in first and "APTS" in first and "AEES" not in first
    summary = (out / "summary.csv").read_bytes()
    (out / "summary.csv").unlink()
    assert main(["report", str(out)]) == 0
    assert (out / "summary.csv").read_bytes() == summary


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "smiri", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("precompute", "validate", "run", "report"):
        assert cmd in r.stdout
