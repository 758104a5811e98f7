import json
import subprocess
import sys

import pytest

from srncl.cli import (EXIT_CONFIG, EXIT_DEADLOCK, EXIT_MISMATCH, EXIT_OK, EXIT_TIMEOUT, EXIT_VIOLATIONS,
                       atomic_write, main)


@pytest.fixture
def sr8(tmp_path):
    path = tmp_path / "sr8.json"
    assert main(["gen", "--arch", "sr", "--width", "8", "--lsu", "3", "-o", str(path)]) == EXIT_OK
    return path


def test_gen_writes_partitioned_netlist(sr8, capsys):
    doc = json.loads(sr8.read_text())
    assert doc["arch"] == "sr" and doc["partition"] == {"n": 8, "l": 3}
    assert doc["meta"]["config"]["lsu"] == 3


def test_gen_rejects_bad_partition(tmp_path, capsys):
    assert main(["gen", "--arch", "sr", "--width", "8", "--lsu", "8", "-o", str(tmp_path / "x.json")]) == EXIT_CONFIG
    assert "partition" in capsys.readouterr().err
    assert not (tmp_path / "x.json").exists()


def test_gen_dmr16_histogram(tmp_path, capsys):
    assert main(["gen", "--arch", "dmr", "--width", "16", "-o", str(tmp_path / "d.json")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "TH22" in out and json.loads((tmp_path / "d.json").read_text())["width"] == 16


def test_sim_success_and_random_delays_identical(sr8, tmp_path):
    assert main(["sim", "--netlist", str(sr8), "--random", "12", "-o", str(tmp_path / "u.json")]) == EXIT_OK
    tokens = []
    for seed in (1, 2, 3):
        out = tmp_path / f"r{seed}.json"
        assert main(["sim", "--netlist", str(sr8), "--random", "12", "--delay", "random",
                     "--delay-seed", str(seed), "-o", str(out)]) == EXIT_OK
        tokens.append(json.loads(out.read_text())["tokens"])
    assert tokens[0] == tokens[1] == tokens[2] == json.loads((tmp_path / "u.json").read_text())["tokens"]


def test_sim_timeout_exit(sr8, tmp_path):
    assert main(["sim", "--netlist", str(sr8), "--max-time", "1", "-o", str(tmp_path / "t.json")]) == EXIT_TIMEOUT


def test_sim_mismatch_exit(tmp_path):
    from srncl.build import build_sr_ncl_cla
    from srncl.faults import invert_carry_rail
    p = tmp_path / "bad.json"
    p.write_text(invert_carry_rail(build_sr_ncl_cla(8, 3)).to_json())
    assert main(["sim", "--netlist", str(p), "--operands", "0+0", "-o", str(tmp_path / "o.json")]) == EXIT_MISMATCH
    assert json.loads((tmp_path / "o.json").read_text())["tokens"] == [8]


def test_sim_trace_and_explicit_operands(sr8, tmp_path):
    trace = tmp_path / "trace.txt"
    assert main(["sim", "--netlist", str(sr8), "--operands", "3+4,255+255+1", "--trace", str(trace),
                 "-o", str(tmp_path / "o.json")]) == EXIT_OK
    assert json.loads((tmp_path / "o.json").read_text())["tokens"] == [7, 511]
    assert len(trace.read_text().splitlines()[0].split()) == 3


def test_exhaustive_cap(tmp_path):
    main(["gen", "--arch", "dmr", "--width", "16", "-o", str(tmp_path / "d.json")])
    assert main(["sim", "--netlist", str(tmp_path / "d.json"), "--exhaustive"]) == EXIT_CONFIG


def test_config_precedence(sr8, tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 9, "sim": {"random": 3, "netlist": str(sr8)}}))
    monkeypatch.setenv("SRNCL_OUT_DIR", str(tmp_path / "env"))
    assert main(["--config", str(cfg), "sim", "--random", "4"]) == EXIT_OK
    doc = json.loads((tmp_path / "env" / "tokens.json").read_text())
    assert doc["config"]["random"] == 4  # flag beats file
    assert doc["config"]["seed"] == 9  # file beats default
    assert len(doc["tokens"]) == 4
    cfg.write_text(json.dumps({"sim": {"bogus": 1}}))
    assert main(["--config", str(cfg), "sim", "--netlist", str(sr8)]) == EXIT_CONFIG


def test_rerun_is_byte_identical(sr8, tmp_path):
    for d in ("a", "b"):
        main(["--out-dir", str(tmp_path / d), "sim", "--netlist", str(sr8), "--random", "5"])
    assert (tmp_path / "a" / "tokens.json").read_bytes() == (tmp_path / "b" / "tokens.json").read_bytes()


def test_campaign_cd_sweep(tmp_path):
    net = tmp_path / "sr4.json"
    main(["gen", "--arch", "sr", "--width", "4", "--lsu", "2", "-o", str(net)])
    out = tmp_path / "camp"
    assert main(["campaign", "--netlist", str(net), "--role", "CD", "--random", "2", "-o", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["violation_count"] == 0
    assert set(summary["scenarios"]) == {"ControlPath"}
    assert (out / "campaign.csv").read_text().startswith("site_id,")


def test_campaign_parallel_matches_serial(tmp_path):
    net = tmp_path / "sr4.json"
    main(["gen", "--arch", "sr", "--width", "4", "--lsu", "2", "-o", str(net)])
    args = ["campaign", "--netlist", str(net), "--role", "ISC,CL_LSU", "--random", "1"]
    assert main(args + ["-o", str(tmp_path / "s")]) == EXIT_OK
    assert main(args + ["--jobs", "2", "-o", str(tmp_path / "p")]) == EXIT_OK
    assert (tmp_path / "s" / "campaign.csv").read_bytes() == (tmp_path / "p" / "campaign.csv").read_bytes()


def test_campaign_violations_exit(tmp_path):
    net = tmp_path / "ncl4.json"
    main(["gen", "--arch", "ncl", "--width", "4", "-o", str(net)])
    rc = main(["campaign", "--netlist", str(net), "--role", "CL_MSU", "--phase", "DATA", "--random", "3",
               "-o", str(tmp_path / "c")])
    assert rc == EXIT_VIOLATIONS
    assert (tmp_path / "c" / "campaign.csv").exists()


def test_compare_and_image(tmp_path, capsys):
    assert main(["compare", "--design", "dmr8", "--design", "sr8:3", "--random", "5", "-o",
                 str(tmp_path / "cmp")]) == EXIT_OK
    rows = (tmp_path / "cmp" / "compare.csv").read_text().splitlines()
    dmr, sr = (r.split(",") for r in rows[1:])
    assert int(sr[2]) < int(dmr[2])
    assert main(["image", "--partitions", "8,14", "-o", str(tmp_path / "img")]) == EXIT_OK
    q8 = json.loads((tmp_path / "img" / "quality_l8.json").read_text())
    assert q8["band"] in ("high", "acceptable")
    assert (tmp_path / "img" / "accurate.pgm").read_bytes().startswith(b"P5")
    assert main(["image", "--image-a", str(tmp_path / "none.pgm"), "--image-b", str(tmp_path / "none.pgm")]) \
        == EXIT_CONFIG


def test_bad_usage_exit_code():
    assert main(["gen", "--arch", "tmr"]) == EXIT_CONFIG
    assert main(["compare", "--design", "xyz"]) == EXIT_CONFIG


def test_atomic_write_leaves_no_temp(tmp_path):
    atomic_write(tmp_path / "f.txt", "hello")
    assert [p.name for p in tmp_path.iterdir()] == ["f.txt"]


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "srncl", "gen", "--arch", "ncl", "--width", "4", "-o",
                        str(tmp_path / "n.json")], capture_output=True, text=True)
    assert r.returncode == 0 and "gates" in r.stdout
