import csv
import io

import numpy as np
import pytest

from stiffbuck.cli import BUCKLE_COLUMNS, TRACE_COLUMNS, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_trace_csv(capsys):
    code, out, _ = run(capsys, "trace", "--scenario", "modelA-S", "--steps", "4")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert tuple(rows[0]) == TRACE_COLUMNS == (
        "delta", "F_along", "Fx", "Fy", "Fz", "Mx", "My", "Mz", "energy", "stable", "min_eig", "tangent_stiffness")
    assert len(rows) == 6
    assert {r[9] for r in rows[1:]} == {"Stable"}
    assert float(rows[-1][0]) == 1.0


def test_gap_rows_exit_two(capsys):
    code, out, _ = run(capsys, "trace", "--scenario", "modelA-S", "--ray", "x", "--delta-max", "0.5", "--steps", "2")
    assert code == 2
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[-1][9] == "gap" and rows[-1][1] == "nan"


def test_byte_identical_runs(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["trace", "--scenario", "modelB-Z", "--steps", "6", "--seed", "3", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_buckle_report(capsys):
    code, out, err = run(capsys, "buckle", "--scenario", "modelA-S", "modelB-Pi", "--steps", "10")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert tuple(rows[0]) == BUCKLE_COLUMNS
    assert rows[1][0] == "modelA-S" and rows[1][1] == "inf"
    assert "K_theta/L" in err


def test_analyze_and_stability(capsys):
    code, out, _ = run(capsys, "analyze", "--scenario", "modelB-Pi", "--pose", "-0.05 0 0 0 0 0")
    assert code == 0 and "rank:" in out and "stability: Stable" in out and "K_theta/L" in out
    code, out, _ = run(capsys, "stability", "--scenario", "modelB-S", "--pose=-0.001,0,0,0,0,0", "--probe", "20")
    assert code == 0 and "probe chain 0: agreement 1" in out


def test_config_round_trip_through_cli(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    assert main(["export", "--scenario", "modelC-Z", "--out", str(cfg)]) == 0
    direct = tmp_path / "direct.csv"
    via = tmp_path / "via.csv"
    assert main(["trace", "--scenario", "modelC-Z", "--steps", "3", "--delta-max", "0.01", "--out", str(direct)]) == 0
    assert main(["trace", "--config", str(cfg), "--steps", "3", "--delta-max", "0.01",
                 "--ray", "-1 0 0 0 0 0", "--out", str(via)]) == 0
    assert direct.read_bytes() == via.read_bytes()


@pytest.mark.parametrize("argv", [
    ["trace", "--scenario", "modelA-S", "--steps", "0"],
    ["trace", "--scenario", "nope"],
    ["analyze", "--scenario", "modelA-S", "--pose", "1 2"],
    ["analyze", "--scenario", "modelA-S", "--wrench", "a b c d e f"],
    ["trace", "--scenario", "modelA-S", "--ray", "0 0 0 0 0 0"],
    ["trace"],
    ["frobnicate"],
])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 1 and "usage error" in err


def test_config_errors(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("chain:\n  elements:\n    - joint: {kind: hinge, axis: rz}\n")
    code, _, err = run(capsys, "analyze", "--config", str(p))
    assert code == 1 and "line 3" in err
    code, _, err = run(capsys, "trace", "--config", str(p))
    assert code == 1


def test_singular_wrench_problem(capsys):
    code, _, err = run(capsys, "analyze", "--scenario", "modelA-S", "--wrench", "-0.5 0 0 0 0 0")
    assert code == 1 and "singular stiffness" in err
