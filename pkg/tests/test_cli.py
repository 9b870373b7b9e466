import csv
import json

import pytest

from zrplab import __version__
from zrplab.cli import config_hash, main, parse_range, ConfigError


def run(tmp_path, *argv):
    return main(["--out", str(tmp_path), *argv])


def read_json(path):
    return json.loads(path.read_text())


def test_verify_smoke(tmp_path, capsys):
    assert run(tmp_path, "verify", "--rate", "linear", "--L", "3", "--N", "2") == 0
    m = read_json(tmp_path / "manifest.json")
    assert m["passed"] is True
    assert m["version"] == __version__
    for key in ("detailed_balance", "stationarity", "normalization", "entropy_decomposition",
                "change_of_variable", "sqrt_inequality"):
        assert m["hard"][key]["pass"], key
    assert (tmp_path / "verify.csv").exists()


def test_global_flags_after_subcommand(tmp_path):
    out = tmp_path / "late"
    assert main(["verify", "--L", "2", "--N", "1", "--out", str(out), "--seed", "3"]) == 0
    assert read_json(out / "manifest.json")["config"]["seed"] == 3


def test_sweep_and_report(tmp_path, capsys):
    a, b = tmp_path / "lin", tmp_path / "con"
    for out, rate in ((a, "linear"), (b, "constant")):
        code = main(["--out", str(out), "sweep", "--rate", rate, "--Lmax", "3", "--Nmax", "2",
                     "--probe", "constants", "--restarts", "2"])
        assert code == 0
    rows = list(csv.DictReader(open(a / "sweep.csv")))
    assert [(r["L"], r["N"]) for r in rows] == [("2", "1"), ("2", "2"), ("3", "1"), ("3", "2")]
    assert {"gap", "s_lo", "gamma_lo", "gamma_up"} <= set(rows[0])
    m = read_json(a / "manifest.json")
    assert "gamma_spread" in m["soft"] and "sweep.csv" in m["files"]
    assert (a / "parts" / "L3_N2.json").exists()

    rep = tmp_path / "rep"
    capsys.readouterr()
    assert main(["--out", str(rep), "report", str(a / "manifest.json")]) == 0
    single = capsys.readouterr().out
    # one manifest: its own table back
    assert "| 3 | 2 | 1 |" in single
    assert main(["--out", str(rep), "report", str(a / "manifest.json"),
                 str(b / "manifest.json")]) == 0
    text = (rep / "report.md").read_text()
    assert "linear:gamma_lo" in text and "constant:gamma_lo" in text
    assert "WARNING" not in text

    m["version"] = "0.0.0"
    (b / "old.json").write_text(json.dumps(m))
    assert main(["--out", str(rep), "report", str(a / "manifest.json"),
                 str(b / "old.json")]) == 0
    assert "mismatched tool versions" in (rep / "report.md").read_text()


def test_config_errors(tmp_path, capsys):
    assert run(tmp_path, "report") == 2
    assert run(tmp_path, "verify", "--rate", "bogus", "--L", "3", "--N", "2") == 2
    assert run(tmp_path, "sweep", "--Lmin", "5", "--Lmax", "3") == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nrate = linear\nwhatever = 3\n")
    assert run(tmp_path, "sweep", "--config", str(bad)) == 2
    assert run(tmp_path, "sweep", "--config", str(tmp_path / "missing.ini")) == 2
    assert run(tmp_path, "frobnicate") == 2
    with pytest.raises(ConfigError):
        parse_range("3-x")


def test_config_file(tmp_path):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("[experiment]\nrate = staircase:2\nL = 2-3\nN = 1-2\nprobes = constants\n"
                   "restarts = 2\n\n[thresholds]\ngamma_spread = 5.0\n")
    assert run(tmp_path, "sweep", "--config", str(cfg)) == 0
    m = read_json(tmp_path / "manifest.json")
    assert m["config"]["rate"] == "staircase:2"
    assert m["soft"]["gamma_spread"]["threshold"] == 5.0


def test_config_hash_order_free():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_simulate_byte_identical(tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["--out", str(out), "--seed", "7", "simulate", "--rate", "constant",
                     "--L", "8", "--N", "16", "-T", "50", "--trace", "500"]) == 0
    for name in ("trajectory_r0.csv", "trace_r0.bin"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    ma, mb = (read_json(o / "manifest.json") for o in outs)
    ma.pop("timestamp"), mb.pop("timestamp")
    assert ma == mb
    other = tmp_path / "c"
    main(["--out", str(other), "--seed", "8", "simulate", "--rate", "constant",
          "--L", "8", "--N", "16", "-T", "50"])
    assert (other / "trajectory_r0.csv").read_bytes() != (outs[0] / "trajectory_r0.csv").read_bytes()


def test_sweep_threads_do_not_change_output(tmp_path):
    outs = []
    for threads in (1, 2):
        out = tmp_path / f"t{threads}"
        assert main(["--out", str(out), "--threads", str(threads), "sweep", "--rate",
                     "staircase:2", "--Lmax", "3", "--Nmax", "2", "--probe", "constants",
                     "--probe", "covariance", "--restarts", "2"]) == 0
        outs.append(out)
    for name in ("sweep.csv", "probes.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
