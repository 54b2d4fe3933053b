"""End-to-end runner tests: subcommands, config precedence, provenance
headers, exit codes and byte-level reproducibility."""

import os

import numpy as np
import pytest

from stickynet import cli


def run(args, tmp_path, name="out"):
    out = tmp_path / name
    code = cli.main(args + ["--out", str(out)])
    return code, out


def _data_lines(path):
    return [l for l in path.read_text().splitlines() if not l.startswith("#")]


# ------------------------------------------------------------- subcommands

def test_density_contains_golden_atom(tmp_path):
    code, out = run(["density", "--seed", "1", "--set", "density.t", "0.01",
                     "--set", "density.y", "0.0,1.0"], tmp_path)
    assert code == 0
    text = (out / "density.csv").read_text()
    assert text.startswith("#seed=1\n#config-hash=")
    lines = _data_lines(out / "density.csv")
    assert lines[0] == "t,x,y,atom,pdf"
    assert "0.793572" in lines[1], f"atom value missing from {lines[1]}"


def test_sample_paths_csv(tmp_path):
    code, out = run(
        ["sample", "--seed", "2", "--set", "sample.horizon", "0.1",
         "--set", "sample.grid_dt", "0.01", "--set", "sample.paths", "2"],
        tmp_path,
    )
    assert code == 0
    lines = _data_lines(out / "paths.csv")
    assert lines[0] == "path_id,time,value"
    assert len(lines) == 1 + 2 * 11


def test_pn_csv_schema(tmp_path):
    code, out = run(
        ["pn", "--seed", "3", "--set", "pn.n_min", "4", "--set", "pn.n_max", "6",
         "--set", "pn.reps", "2000"],
        tmp_path,
    )
    assert code == 0
    lines = _data_lines(out / "pn.csv")
    assert lines[0] == "n,reps,p_hat,stderr,ratio_2n2,analytic_pn,slope"
    assert len(lines) == 4
    ns = [int(l.split(",")[0]) for l in lines[1:]]
    assert ns == [4, 5, 6]


def test_net_csv(tmp_path):
    code, out = run(
        ["net", "--seed", "4", "--set", "net.eps", "0.125",
         "--set", "net.horizon", "0.25", "--set", "net.width", "2.0",
         "--set", "net.level", "2"],
        tmp_path,
    )
    assert code == 0
    lines = _data_lines(out / "net.csv")
    assert lines[0] == "step,position_count,min_gap,flagged_j1,flagged_j3"
    assert len(lines) == 1 + 17


def test_dim_csv(tmp_path):
    code, out = run(
        ["dim", "--seed", "5", "--set", "dim.grids", "2",
         "--set", "dim.k_min", "7", "--set", "dim.k_max", "10"],
        tmp_path,
    )
    assert code == 0
    lines = _data_lines(out / "dim.csv")
    assert lines[0] == "level,count,weighted_slope,unweighted_slope"
    assert len(lines) == 5


def test_verify_runs_green(tmp_path):
    code, out = run(
        ["verify", "--seed", "7", "--set", "verify.reps", "20000"], tmp_path
    )
    assert code == 0
    assert (out / "verify.json").exists()
    assert (out / "verify.csv").exists()


# ------------------------------------------------------------- exit codes

def test_unknown_subcommand_exit_code(tmp_path, capsys):
    assert cli.main(["frobnicate", "--out", str(tmp_path / "x")]) == 2


def test_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("this line has no equals sign\n")
    assert cli.main(["density", "--config", str(bad), "--out", str(tmp_path / "o")]) == 3
    assert cli.main(
        ["density", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path / "o")]
    ) == 3


def test_unwritable_output_exit_code(tmp_path):
    # a plain file in the way makes the output directory uncreatable, which
    # works regardless of user privileges
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert cli.main(["density", "--out", str(blocker / "sub")]) == 4


# ------------------------------------------- reproducibility and precedence

def test_verify_byte_identical_reruns(tmp_path):
    args = ["verify", "--seed", "7", "--set", "verify.reps", "10000"]
    _, o1 = run(args, tmp_path, "a")
    _, o2 = run(args, tmp_path, "b")
    assert (o1 / "verify.json").read_bytes() == (o2 / "verify.json").read_bytes()


def test_rerun_from_echoed_config(tmp_path):
    args = ["pn", "--seed", "11", "--set", "pn.n_min", "5", "--set", "pn.n_max", "6",
            "--set", "pn.reps", "3000"]
    _, o1 = run(args, tmp_path, "a")
    echo = o1 / "config.echo"
    assert echo.exists()
    code = cli.main(["pn", "--config", str(echo), "--out", str(tmp_path / "b")])
    assert code == 0
    assert (tmp_path / "b" / "pn.csv").read_bytes() == (o1 / "pn.csv").read_bytes()
    assert (tmp_path / "b" / "config.echo").read_bytes() == echo.read_bytes()


def test_thread_count_invariance(tmp_path):
    base = ["pn", "--seed", "13", "--set", "pn.n_min", "5", "--set", "pn.n_max", "7",
            "--set", "pn.reps", "3000"]
    _, o1 = run(base + ["--threads", "1"], tmp_path, "t1")
    _, o4 = run(base + ["--threads", "4"], tmp_path, "t4")
    d1 = _data_lines(o1 / "pn.csv")
    d4 = _data_lines(o4 / "pn.csv")
    assert d1 == d4, "results must not depend on the worker count"


def test_env_seed_and_flag_precedence(tmp_path, monkeypatch):
    cfgfile = tmp_path / "c.cfg"
    cfgfile.write_text("seed = 100\ndensity.t = 0.5  # trailing comment\n")

    monkeypatch.setenv("STICKYNET_SEED", "200")
    _, out = run(["density", "--config", str(cfgfile)], tmp_path, "env")
    assert "seed = 200" in (out / "config.echo").read_text()

    _, out2 = run(["density", "--config", str(cfgfile), "--seed", "300"], tmp_path, "flag")
    assert "seed = 300" in (out2 / "config.echo").read_text()

    monkeypatch.delenv("STICKYNET_SEED")
    _, out3 = run(["density", "--config", str(cfgfile)], tmp_path, "file")
    echo3 = (out3 / "config.echo").read_text()
    assert "seed = 100" in echo3
    assert "density.t = 0.5" in echo3, "comments must be stripped, values kept"


def test_svg_emission(tmp_path):
    pytest.importorskip("matplotlib")
    code, out = run(
        ["density", "--svg", "--set", "density.t", "0.1", "--set", "density.y", "0.0:2.0:9"],
        tmp_path,
    )
    assert code == 0
    assert (out / "density.svg").exists()
