import csv
import json
import os

import pytest

from happysim.cli import main

CONFIG = """
[geometry]
rows = 4096

[policy]
names = ["open", "close", "hybrid_happy", "intel_adaptive"]

[run]
seed = 5

[[traces]]
name = "stream"
kind = "stream"
length = 3000
ways = 2

[[traces]]
name = "uniform"
kind = "uniform"
length = 3000
mean_gap = 60
coverage = 0.1
ways = 2

[[traces]]
name = "both"
mix = ["stream", "uniform"]
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text(CONFIG)
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_writes_reports(cfg, tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--out", str(out)], env={}) == 0
    reports = read_csv(out / "reports.csv")
    assert len(reports) == 3 * 4
    rows = {(r["trace"], r["policy"]): r for r in read_csv(out / "comparison.csv")}
    assert float(rows["stream", "open"]["mean_latency"]) < float(rows["stream", "close"]["mean_latency"])
    assert float(rows["uniform", "close"]["mean_latency"]) <= float(rows["uniform", "open"]["mean_latency"])
    assert ("GMEAN", "intel_adaptive") in rows
    doc = json.loads((out / "reports.json").read_text())
    assert doc["config"]["run"]["seed"] == 5
    assert doc["config"]["traces"][2]["mix"] == ["stream", "uniform"]


def test_baseline_runs_static_policies_internally(cfg, tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--policy", "hybrid"], env={}) == 0
    assert {r["policy"] for r in read_csv(out / "reports.csv")} == {"hybrid"}
    comp = [r for r in read_csv(out / "comparison.csv") if r["trace"] != "GMEAN"]
    assert {r["baseline"] for r in comp} <= {"open", "close"}


def test_run_is_byte_identical(cfg, tmp_path):
    outs = []
    for i, workers in enumerate((1, 1, 3)):
        out = tmp_path / f"o{i}"
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "same"),
                     "--set", f"run.workers={workers}"], env={}) == 0
        os.rename(tmp_path / "same", out)
        outs.append(out)
    for name in ("reports.csv", "comparison.csv"):
        texts = {(o / name).read_bytes() for o in outs}
        assert len(texts) == 1
    assert (outs[0] / "reports.json").read_bytes() == (outs[1] / "reports.json").read_bytes()


def test_seed_changes_generated_traces(cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", "--config", str(cfg), "--out", str(a), "--policy", "open"], env={})
    main(["run", "--config", str(cfg), "--out", str(b), "--policy", "open", "--seed", "6"], env={})
    assert (a / "reports.csv").read_bytes() != (b / "reports.csv").read_bytes()


def test_empty_policy_list(cfg, tmp_path, capsys):
    rc = main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"),
               "--set", "policy.names=[]"], env={})
    assert rc != 0
    assert "policy.names" in capsys.readouterr().err


def test_conflicting_sources(cfg, tmp_path, capsys):
    rc = main(["run", "--config", str(cfg), "--seed", "1"], env={"HAPPYSIM_RUN__SEED": "2"})
    assert rc != 0
    err = capsys.readouterr().err
    assert "--seed" in err and "HAPPYSIM_RUN__SEED" in err


def test_unknown_key(cfg, tmp_path, capsys):
    assert main(["run", "--config", str(cfg), "--set", "dram.queue=3"], env={}) != 0
    assert "dram.queue" in capsys.readouterr().err


def test_gen_then_run_trace_files(cfg, tmp_path, capsys):
    gen = tmp_path / "g"
    assert main(["gen", "--config", str(cfg), "--out", str(gen)], env={}) == 0
    assert sorted(os.listdir(gen)) == ["stream.trace", "uniform.trace"]
    assert "both: mix, skipped" in capsys.readouterr().out
    out = tmp_path / "o"
    assert main(["run", "--trace", str(gen / "stream.trace"), "--policy", "open",
                 "--out", str(out), "--set", "geometry.rows=4096"], env={}) == 0
    with_file = read_csv(out / "reports.csv")[0]
    direct = tmp_path / "d"
    main(["run", "--config", str(cfg), "--out", str(direct), "--policy", "open"], env={})
    generated = [r for r in read_csv(direct / "reports.csv") if r["trace"] == "stream"][0]
    for key in ("hits", "misses", "empties", "total_latency"):
        assert with_file[key] == generated[key]


def test_gen_single_name(cfg, tmp_path):
    gen = tmp_path / "g"
    assert main(["gen", "--config", str(cfg), "--out", str(gen), "--trace", "uniform"], env={}) == 0
    assert os.listdir(gen) == ["uniform.trace"]
    assert main(["gen", "--config", str(cfg), "--out", str(gen), "--trace", "nope"], env={}) != 0


def test_bad_trace_file(tmp_path, capsys):
    bad = tmp_path / "bad.trace"
    bad.write_text("0 R 0x0\n3 X 0x10\n")
    assert main(["run", "--trace", str(bad), "--out", str(tmp_path / "o")], env={}) != 0
    assert "line 2" in capsys.readouterr().err


def test_oracle_verb(cfg, capsys):
    assert main(["oracle", "--config", str(cfg)], env={}) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("trace,requests,oracle_hits")
    assert len(lines) == 4
    stream = lines[1].split(",")
    assert int(stream[2]) / int(stream[1]) > 0.98


def test_scaling_verb(capsys, tmp_path):
    assert main(["scaling", "--out", str(tmp_path)], env={}) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    by_gb = {int(r["capacity_bytes"]) >> 30: r for r in rows}
    assert int(by_gb[4]["hybrid_counters"]) == 524_288
    assert int(by_gb[4]["hybrid_happy_counters"]) == 38
    assert (tmp_path / "scaling.csv").exists()


def test_scaling_rejects_odd_capacity(capsys):
    assert main(["scaling", "--set", "scaling.capacities_gb=[3]"], env={}) != 0
    assert "power of two" in capsys.readouterr().err


def test_module_entry_point(cfg):
    import subprocess
    import sys
    proc = subprocess.run([sys.executable, "-m", "happysim", "oracle", "--config", str(cfg)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("trace,")
