import csv

import numpy as np
import pytest

from pfbcp.cli import main
from pfbcp.config import random_initial_field
from pfbcp.fileio import read_energy_log, read_snapshot, write_snapshot
from pfbcp.spectral import Grid2D


def run(tmp_path, *args):
    return main(list(args) + ["--output-dir", str(tmp_path)])


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    assert "fig1 " in out and "fig11" in out


def test_config_errors_exit_2(tmp_path, capsys):
    assert run(tmp_path, "simulate", "--scheme", "cn", "--dt", "0.1") == 2
    assert "t_end" in capsys.readouterr().err
    assert run(tmp_path, "simulate", "--scheme", "cn", "--dt", "x", "--t-end", "1") == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_config_file_and_line_number(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("scheme = cn\ndt = 0.01\nt_end = 0.02\nnu = -1\n")
    assert main(["simulate", "--config", str(cfg)]) == 2
    assert "line 4" in capsys.readouterr().err


def test_single_step_writes_initial_field(tmp_path):
    code = run(tmp_path, "simulate", "--scheme", "cn", "--n", "16", "--dt", "0.001",
               "--t-end", "0.001", "--amplitude", "0", "--phi-mean", "0.25",
               "--snapshot-times", "0.001", "--label", "flat")
    assert code == 0
    outdir = tmp_path / "flat"
    snaps = sorted(outdir.glob("*_phi.bcps"))
    assert len(snaps) == 1
    snap = read_snapshot(snaps[0])
    assert snap.time == pytest.approx(0.001)
    assert np.array_equal(snap.values, np.full((16, 16), 0.25))
    log = read_energy_log(outdir / "energy.csv")
    assert log["time"].tolist() == [0.0, 0.001]
    assert "monotonicity_violations = 0" in (outdir / "summary.txt").read_text()


def test_short_ns_run_logs_coupled_columns(tmp_path):
    code = run(tmp_path, "simulate", "--scheme", "ns", "--n", "16", "--dt", "0.01",
               "--t-end", "0.05", "--log-stride", "2", "--snapshot-times", "0 0.05")
    assert code == 0
    log = read_energy_log(tmp_path / "run" / "energy.csv")
    assert "div_u" in log and np.all(np.diff(log["energy"]) <= 1e-12)
    assert len(list((tmp_path / "run").glob("*_u.bcps"))) == 2


def test_initial_field_matches_seeded_generator(tmp_path):
    run(tmp_path, "simulate", "--scheme", "bdf2", "--n", "16", "--dt", "0.01", "--t-end", "0.01",
        "--seed", "7", "--snapshot-times", "0")
    (snap,) = (tmp_path / "run").glob("*t0.000000_phi.bcps")
    expected = random_initial_field(Grid2D(16, 16), 0.0, 0.01, 7)
    assert np.array_equal(read_snapshot(snap).values, expected)


def test_solver_failure_exit_3(tmp_path, capsys):
    code = run(tmp_path, "simulate", "--scheme", "cn", "--n", "16", "--dt", "0.5",
               "--t-end", "1", "--amplitude", "0.5", "--max-iter", "1", "--tol", "1e-15")
    assert code == 3
    assert "failed" in capsys.readouterr().err


def test_convergence_csv(tmp_path):
    code = run(tmp_path, "convergence", "--scheme", "cn", "--n", "16", "--dts", "0.01,0.005",
               "--t-end", "0.02")
    assert code == 0
    with (tmp_path / "sweep_cn_cn.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["dt", "error", "order"]
    assert rows[1][2] == "" and 1.8 < float(rows[2][2]) < 2.2


def test_convergence_single_row_has_empty_order(tmp_path):
    assert run(tmp_path, "convergence", "--scheme", "ns", "--n", "16", "--dts", "0.01",
               "--t-end", "0.01") == 0
    with (tmp_path / "sweep_ns_ns.csv").open() as fh:
        header, row = list(csv.reader(fh))
    assert header[:3] == ["dt", "error_u", "order_u"]
    assert row[2] == "" and len(row) == 9


def test_convert_and_io_errors(tmp_path, capsys):
    src = write_snapshot(tmp_path / "f.bcps", np.eye(3), 1.0)
    assert main(["convert", str(src)]) == 0
    assert np.array_equal(np.loadtxt(tmp_path / "f.csv", delimiter=","), np.eye(3))
    (tmp_path / "bad.bcps").write_bytes(b"nope")
    assert main(["convert", str(tmp_path / "bad.bcps")]) == 4
    assert main(["convert", str(tmp_path / "absent.bcps")]) == 4
