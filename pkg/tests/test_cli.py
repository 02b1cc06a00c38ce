import subprocess
import sys

import pytest

from csfeedback.cli import main, parse_users
from csfeedback.harness import CSV_HEADER

HEADER = ",".join(CSV_HEADER)


def test_single_row(capsys):
    assert main(["--users", "100", "--schemes", "random", "--trials", "1", "--seed", "7"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == HEADER
    assert len(lines) == 2 and lines[1].startswith("random,100,1,7,")


def test_output_file(tmp_path, capsys):
    out = tmp_path / "res.csv"
    code = main(["--users", "10:30:10", "--schemes", "dedicated,random", "--trials", "3",
                 "--out", str(out)])
    assert code == 0
    assert capsys.readouterr().out == ""
    rows = out.read_text().strip().splitlines()
    assert len(rows) == 1 + 2 * 3


def test_config_file_with_overrides(tmp_path, capsys):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("schemes: [dedicated]\nusers: [5]\ntrials: 4\nseed: 11\n")
    assert main(["--config", str(cfg), "--seed", "12"]) == 0
    assert capsys.readouterr().out.strip().splitlines()[1].startswith("dedicated,5,4,12,")


@pytest.mark.parametrize(
    "argv",
    [["--users", "1:x"], ["--users", "0"], ["--schemes", "best"], ["--trials", "0"],
     ["--seed", "abc"], ["--bogus"], ["--validate", "--checks", "nope"],
     ["--config", "/nonexistent/run.yaml"]],
)
def test_usage_errors(argv, capsys):
    assert main(argv) == 2


@pytest.mark.parametrize("body", ["trails: 4\n", "users: [1, 2\n", "trials: 0\n"])
def test_bad_config_file(tmp_path, body):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(body)
    assert main(["--config", str(cfg)]) == 2


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "--validate" in capsys.readouterr().out


@pytest.mark.parametrize("text,users", [("50:60:5", [50, 55, 60]), ("7,9", [7, 9]), ("4", [4]),
                                        ("3:5", [3, 4, 5])])
def test_parse_users(text, users):
    assert parse_users(text) == users


def test_validate_subset_passes(capsys):
    assert main(["--validate", "--checks", "backoff,block_recovery"]) == 0
    out = capsys.readouterr().out
    assert "optimal back-off" in out and "PASS" in out and "FAIL" not in out


def test_validate_reports_failures(capsys):
    assert main(["--validate", "--checks", "feedback_load"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_console_script_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "csfeedback.cli", "--users", "3", "--schemes", "random",
         "--trials", "2"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0] == HEADER
