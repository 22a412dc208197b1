import json
import shutil
import subprocess
import sys

import pytest

from ergosum import cli


@pytest.fixture(autouse=True)
def in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def load(path):
    return json.loads(path.read_text())


def test_cf_writes_default_json(in_tmp):
    assert cli.run(["cf", "--theta", "TICHY-FAST", "--nu", "6", "--no-timestamp"]) == 0
    doc = load(in_tmp / "cf.json")
    assert "timestamp" not in doc
    assert [int(row["Q"]) for row in doc["convergents"]] == [1, 1, 2, 5, 62, 6205, 119260162]
    assert {row["verdict"] for row in doc["convergents"]} == {"holds"}


def test_gaps_defaults_to_csv(in_tmp):
    assert cli.run(["gaps", "--nu", "4"]) == 0
    header, row = (in_tmp / "gaps.csv").read_text().splitlines()[:2]
    assert row.startswith("4,2,3,")


def test_sum_to_stdout(capsys):
    assert cli.run(["sum", "--f", "zero", "--Q", "100", "--out", "-", "--no-timestamp"]) == 0
    out = capsys.readouterr().out
    assert json.loads(out[: out.rindex("}") + 1])["sum"] == ["0/1", "0/1"]


def test_inconclusive_maps_to_2(in_tmp):
    assert cli.run(["prop1", "--theta", "GOLDEN", "--nu-max", "20"]) == 2
    assert load(in_tmp / "prop1.json")["status"] == "inconclusive"


@pytest.mark.parametrize("argv", [["cf", "--bogus"], ["nope"], [], ["sum", "--Q", "-3"],
                                  ["sum", "--format", "xml"], ["cf", "--theta", "NOT-A-SPEC"]])
def test_usage_errors_map_to_1(argv, capsys):
    assert cli.run(argv) == 1
    assert capsys.readouterr().err


def test_budget_error_maps_to_1(in_tmp):
    assert cli.run(["sum", "--Q", "1000", "--budget-q", "10"]) == 1
    assert not (in_tmp / "sum.json").exists()


def test_config_then_flags(in_tmp):
    (in_tmp / "run.cfg").write_text("# sample\ntheta = TICHY-SLOW\nQ = 50\nf = tent\n")
    assert cli.run(["sum", "--config", "run.cfg", "--Q", "40", "--no-timestamp", "--out", "a.json"]) == 0
    doc = load(in_tmp / "a.json")
    assert doc["Q"] == 40 and doc["theta"] == str(cli.cf_engine.TICHY_SLOW)
    (in_tmp / "bad.cfg").write_text("colour = blue\n")
    assert cli.run(["sum", "--config", "bad.cfg"]) == 1


def test_no_timestamp_is_byte_identical(in_tmp):
    argv = ["t2-verify", "--theta", "TICHY-FAST", "--nu", "4", "--no-timestamp"]
    assert cli.run([*argv, "--out", "a.json"]) == 0
    assert cli.run([*argv, "--out", "b.json", "--threads", "3"]) == 0
    assert (in_tmp / "a.json").read_bytes() == (in_tmp / "b.json").read_bytes()


def test_atomic_write_leaves_no_temp_files(in_tmp):
    cli.write_atomic(str(in_tmp / "x.txt"), "one")
    cli.write_atomic(str(in_tmp / "x.txt"), "two")
    assert (in_tmp / "x.txt").read_text() == "two"
    assert sorted(p.name for p in in_tmp.iterdir()) == ["x.txt"]


def test_failed_write_keeps_old_file(in_tmp, monkeypatch):
    (in_tmp / "keep.json").write_text("old")

    def boom(*a, **k):
        raise OSError("disk full")
    monkeypatch.setattr(cli.os, "replace", boom)
    with pytest.raises(OSError):
        cli.write_atomic(str(in_tmp / "keep.json"), "new")
    assert (in_tmp / "keep.json").read_text() == "old"
    assert sorted(p.name for p in in_tmp.iterdir()) == ["keep.json"]


@pytest.mark.skipif(shutil.which("ergosum") is None, reason="console script not installed")
def test_console_script_exit_code(in_tmp):
    ok = subprocess.run(["ergosum", "koksma", "--Q", "50", "--no-timestamp"], capture_output=True)
    assert ok.returncode == 0, ok.stderr
    bad = subprocess.run(["ergosum", "cf", "--nope"], capture_output=True)
    assert bad.returncode == 1 and b"usage" in bad.stderr


def test_module_entry_point(in_tmp):
    res = subprocess.run([sys.executable, "-m", "ergosum.cli", "disc", "--nu", "6", "--no-timestamp"],
                         capture_output=True)
    assert res.returncode == 0, res.stderr
    assert (in_tmp / "disc.json").exists()
