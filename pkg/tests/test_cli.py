import argparse
import csv

import pytest

from stokes_darcy.adaptivity import LOG_COLUMNS
from stokes_darcy.benchmarks import SPACE_COLUMNS, TIME_COLUMNS
from stokes_darcy.cli import EXIT_CHECKS, EXIT_INPUT, EXIT_OK, EXIT_RUNTIME, main, parse_args, parse_h, parse_mode


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_parse_h():
    assert parse_h("32") == parse_h("1/32") == parse_h("0.03125") == 1 / 32
    assert parse_h("1") == 1.0
    for bad in ("0", "-4", "abc", "1/0"):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_h(bad)


def test_parse_mode():
    assert parse_mode("coupled-filtered") == ("coupled", True)
    assert parse_mode("Decoupled-Unfiltered") == ("decoupled", False)
    with pytest.raises(argparse.ArgumentTypeError):
        parse_mode("coupled")


def test_missing_case_names_flag(capsys):
    assert main(["run-fixed", "--h", "4", "--dt", "0.1"]) == EXIT_INPUT
    assert "--case" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["run-fixed", "--case", "test2", "--h", "4", "--dt", "0.1", "--bogus"],
        ["run-fixed", "--case", "test2", "--h", "4", "--dt", "0.1", "--theta", "0.6"],
        ["run-fixed", "--case", "test9", "--h", "4", "--dt", "0.1"],
        ["run-fixed", "--case", "test2", "--h", "4"],
        ["run-fixed", "--case", "test2", "--h", "4", "--dt", "0.1", "--schedule", "K1"],
        ["run-adaptive", "--case", "test2", "--h", "4"],
    ],
)
def test_invalid_input_exits_1(argv, capsys):
    assert main(argv) == EXIT_INPUT
    assert capsys.readouterr().err.strip()


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# fixed run\ncase = test2\nh = 1/4\ndt = 0.1  # step\nno-timing = yes\n")
    args = parse_args(["sweep-space", "--config", str(cfg), "--dt", "0.05"])
    assert args.case == "test2"
    assert args.h == [0.25]
    assert args.dt == 0.05  # flags win over the file
    assert args.no_timing is True


@pytest.mark.parametrize(
    "text, needle",
    [("case test2\n", ":1:"), ("case = test2\n= 3\n", ":2:"), ("color = red\n", "color"), ("no-timing = maybe\n", "boolean")],
)
def test_bad_config_exits_1(tmp_path, capsys, text, needle):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    assert main(["sweep-space", "--config", str(cfg)]) == EXIT_INPUT
    assert needle in capsys.readouterr().err


def test_missing_config_exits_1(tmp_path):
    assert main(["check-theory", "--config", str(tmp_path / "nope.cfg")]) == EXIT_INPUT


def test_check_theory_table(capsys):
    code = main(["check-theory", "--samples", "2000", "--seed", "7", "--grid", "10"])
    out = capsys.readouterr().out
    lines = out.splitlines()
    assert lines[0].startswith("check")
    assert all(line.endswith("PASS") for line in lines[1:-1])
    violations = int(out.split("bound violations")[1].split()[0])
    assert code == (EXIT_OK if violations == 0 else EXIT_CHECKS)


def test_run_fixed_table(tmp_path):
    out = tmp_path / "run.csv"
    argv = ["run-fixed", "--case", "test2", "--h", "4", "--dt", "0.1", "--T", "0.3", "--out", str(out)]
    assert main(argv) == EXIT_OK
    rows = _rows(out)
    assert rows[0] == ["m", "t", "err_u", "err_p", "err_phi"]
    assert float(rows[-1][1]) == pytest.approx(0.3)


def test_run_fixed_schedule(tmp_path):
    out = tmp_path / "k2.csv"
    argv = ["run-fixed", "--case", "test1", "--h", "2", "--schedule", "K2", "--steps", "5", "--out", str(out)]
    assert main(argv) == EXIT_OK
    assert len(_rows(out)) == 1 + 2 + 5


def test_run_adaptive_log(tmp_path, capsys):
    out = tmp_path / "log.csv"
    argv = ["run-adaptive", "--case", "test2", "--h", "4", "--eps", "1e-3", "--T", "0.3", "--out", str(out)]
    assert main(argv) == EXIT_OK
    rows = _rows(out)
    assert tuple(rows[0]) == LOG_COLUMNS
    assert {r[7] for r in rows[1:]} <= {"accept", "reject"}
    assert "accepted" in capsys.readouterr().err


def test_controller_stall_exits_2(capsys):
    argv = ["run-adaptive", "--case", "test2", "--h", "2", "--eps", "1e-30", "--T", "0.3"]
    assert main(argv) == EXIT_RUNTIME
    assert capsys.readouterr().err.startswith("error:")


def test_sweep_space_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["sweep-space", "--case", "test2", "--h", "2,4", "--dt", "0.1", "--T", "0.2", "--no-timing"]
    assert main(base + ["--out", str(a)]) == EXIT_OK
    assert main(base + ["--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    rows = _rows(a)
    assert tuple(rows[0]) == SPACE_COLUMNS
    assert rows[1][SPACE_COLUMNS.index("order_u")] == ""
    assert float(rows[2][SPACE_COLUMNS.index("order_u")]) > 0


def test_sweep_time_table(tmp_path, capsys):
    out = tmp_path / "t.csv"
    argv = [
        "sweep-time", "--case", "test2", "--mode", "coupled-unfiltered", "--h", "4",
        "--eps", "1e-2,1e-3", "--T", "0.3", "--no-timing", "--out", str(out),
    ]
    assert main(argv) == EXIT_OK
    rows = _rows(out)
    assert tuple(rows[0]) == TIME_COLUMNS
    assert len(rows) == 3
    assert float(rows[1][0]) == 1e-2
    assert "fitted orders" in capsys.readouterr().err


def test_export_fields(tmp_path):
    d1, d2 = tmp_path / "one", tmp_path / "two"
    base = ["export-fields", "--case", "test2", "--h", "1", "--dt", "0.1", "--T", "0.2"]
    assert main(base + ["--out", str(d1)]) == EXIT_OK
    assert main(base + ["--out", str(d2)]) == EXIT_OK
    fluid = _rows(d1 / "fluid.csv")
    assert fluid[0] == ["x", "y", "u1", "u2", "p"]
    assert len(fluid) == 1 + 9
    assert _rows(d1 / "porous.csv")[0] == ["x", "y", "phi"]
    for name in ("fluid.csv", "porous.csv", "fluid.vtk", "porous.vtk"):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()
    vtk = (d1 / "fluid.vtk").read_text().splitlines()
    assert vtk[0].startswith("# vtk DataFile")
    assert "CELL_TYPES 2" in vtk


def test_export_requires_out():
    assert main(["export-fields", "--case", "test2", "--h", "1", "--dt", "0.1"]) == EXIT_INPUT


def test_export_unwritable_exits_2(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    argv = ["export-fields", "--case", "test2", "--h", "1", "--dt", "0.1", "--T", "0.2", "--out", str(blocker / "sub")]
    assert main(argv) == EXIT_RUNTIME
    assert "error" in capsys.readouterr().err
