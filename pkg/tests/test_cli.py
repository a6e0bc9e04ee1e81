import csv
import json
import subprocess
import sys

import pytest

from dyadrep.cli import config_hash, main
from dyadrep.simplefn import SimpleFunction

QUICK = {
    "verify-bcr": ["--samples", "2"],
    "error-decay": ["--samples", "4", "--a", "-6", "--b", "5"],
    "verify-split": [],
    "goodness-stats": ["--samples", "2000", "--d", "1", "--k", "2,3"],
    "verify-averaging": ["--samples", "200", "--k", "2,3"],
    "verify-representation": ["--samples", "40", "--a", "-2", "--b", "4", "--k-max", "5"],
    "shift-norms": ["--samples", "2", "--k", "2,4"],
    "dini": ["--omega", "power:1", "--s", "0"],
}


def run(tmp_path, sub, *args):
    out = tmp_path / sub
    code = main([*args, "--out", str(out)])
    return code, out


@pytest.mark.parametrize("command", sorted(QUICK))
def test_rerun_is_byte_identical(tmp_path, command):
    c1, o1 = run(tmp_path, "one", command, "--seed", "3", *QUICK[command])
    c2, o2 = run(tmp_path, "two", command, "--seed", "3", *QUICK[command])
    assert c1 == c2 and c1 in (0, 1)
    files = sorted(p.name for p in o1.iterdir())
    assert files == sorted(p.name for p in o2.iterdir())
    assert f"{command}.csv" in files
    for name in files:
        assert (o1 / name).read_bytes() == (o2 / name).read_bytes()


def test_csv_header(tmp_path):
    code, out = run(tmp_path, "x", "verify-bcr", "--seed", "5", "--samples", "2")
    assert code == 0
    rows = list(csv.reader(open(out / "verify-bcr.csv", encoding="utf-8")))
    assert rows[0][0] == "config_hash" and rows[0][2] == "seed" and rows[0][3] == "5"
    cfg = json.loads(rows[1][1])
    assert config_hash(dict(cfg, out="elsewhere")) == rows[0][1]


def test_verdict_lines(tmp_path, capsys):
    assert run(tmp_path, "b", "verify-bcr", "--samples", "2")[0] == 0
    assert run(tmp_path, "s", "verify-split")[0] == 0
    assert run(tmp_path, "d", "dini", "--omega", "power:1", "--s", "0")[0] == 0
    out = capsys.readouterr().out
    assert "verify-bcr: PASS" in out and "verify-split: PASS" in out
    assert "0.5" in out


def test_goodness_stats_example(tmp_path):
    code, _ = run(tmp_path, "g", "goodness-stats", "--d", "1", "--k", "3", "--samples", "100000")
    assert code == 0


def test_failing_verdict_exits_one(tmp_path):
    # the unscaled normalization is off by 2^d, so the averaging check fails
    code, _ = run(tmp_path, "v", "verify-averaging", "--samples", "2000", "--k", "3", "--gamma", "1,1",
                  "--convention", "unscaled")
    assert code == 1


@pytest.mark.parametrize("args", [
    ["verify-bcr", "--kernel", "nope"],
    ["verify-bcr", "--a", "3", "--b", "1"],
    ["verify-bcr", "--f", "{broken"],
    ["verify-bcr", "--threads", "0"],
    ["dini", "--omega", "exp"],
    ["verify-bcr", "--bogus"],
    ["verify-bcr", "--config", "/nonexistent/file"],
])
def test_config_errors_exit_two(tmp_path, args):
    assert run(tmp_path, "e", *args)[0] == 2


def test_config_file_mirrors_flags(tmp_path):
    f = SimpleFunction.indicator((0, 1)).to_json()
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# comment\nkernel = hilbert\nf = {f}\na = -3\nb = 4\nsamples = 2\nseed = 9\n", encoding="utf-8")
    c1, o1 = run(tmp_path, "cfg", "verify-bcr", "--config", str(cfg))
    c2, o2 = run(tmp_path, "flags", "verify-bcr", "--kernel", "hilbert", "--f", f, "--a", "-3", "--b", "4",
                 "--samples", "2", "--seed", "9")
    assert c1 == c2 == 0
    assert (o1 / "verify-bcr.csv").read_bytes() == (o2 / "verify-bcr.csv").read_bytes()
    bad = tmp_path / "bad.cfg"
    bad.write_text("unknown = 1\n", encoding="utf-8")
    assert run(tmp_path, "bad", "verify-bcr", "--config", str(bad))[0] == 2


def test_function_file_and_module_entry(tmp_path):
    path = tmp_path / "f.json"
    path.write_text(SimpleFunction.indicator((0, 1), coeff=2).to_json(), encoding="utf-8")
    proc = subprocess.run([sys.executable, "-m", "dyadrep", "verify-bcr", "--f", f"@{path}", "--samples", "1",
                           "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "PASS" in proc.stdout
