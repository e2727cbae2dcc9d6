import csv
import dataclasses
import json
import math

import numpy as np
import pytest

import lqgcap.cli as cli
from lqgcap import compute_capacity

from conftest import TWO_STATE_JSTAR, two_state, write_config


@pytest.fixture
def awgn_config(tmp_path):
    doc = {"F": [[0.0]], "G": [[0.0]], "H": [[0.0]], "J": [[1.0]],
           "W": [[0.0]], "V": [[1.0]], "Q": [[0.0]], "R": [[1.0]]}
    path = tmp_path / "awgn.json"
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def two_state_config(tmp_path):
    return write_config(tmp_path / "two_state.json", two_state())


def test_capacity_command_outputs(tmp_path, awgn_config, capsys):
    out = tmp_path / "out"
    out.mkdir()
    code = cli.main(["capacity", awgn_config, "--p", "1", "--out", str(out)])
    assert code == 0
    printed = capsys.readouterr().out
    assert "capacity" in printed

    doc = json.loads((out / "capacity_result.json").read_text())
    assert doc["capacity_bits"] == pytest.approx(0.5, abs=1e-6)
    assert doc["certificate"]["certified"] is True

    manifest = json.loads((out / "capacity_result.manifest.json").read_text())
    for key in ("command", "config_path", "parameters", "argv",
                "output_paths", "tool_version", "wall_time_s"):
        assert key in manifest
    assert manifest["command"] == "capacity"
    assert "capacity_result.json" in manifest["output_paths"]


def test_capacity_bits_headline(tmp_path, awgn_config, capsys):
    code = cli.main(["capacity", awgn_config, "--p", "1", "--bits",
                     "--out", str(tmp_path)])
    assert code == 0
    assert "bits" in capsys.readouterr().out


def test_infeasible_budget_names_floor(tmp_path, two_state_config, capsys):
    code = cli.main(["capacity", two_state_config, "--p", "27.0",
                     "--out", str(tmp_path)])
    assert code == 3
    err = capsys.readouterr().err
    assert "27.32" in err


def test_missing_matrix_is_config_error(tmp_path, capsys):
    doc = {"F": [[0.0]], "G": [[0.0]], "H": [[0.0]], "J": [[1.0]],
           "W": [[0.0]], "Q": [[0.0]], "R": [[1.0]]}
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(doc))
    code = cli.main(["capacity", str(path), "--p", "1",
                     "--out", str(tmp_path)])
    assert code == 2
    assert "V" in capsys.readouterr().err


def test_assumption_violation_reported(tmp_path, capsys):
    doc = {"F": [[1.4]], "G": [[1.0]], "H": [[0.0]], "J": [[1.0]],
           "W": [[1.0]], "V": [[1.0]], "Q": [[0.0]], "R": [[1.0]]}
    path = tmp_path / "undet.json"
    path.write_text(json.dumps(doc))
    code = cli.main(["capacity", str(path), "--p", "1",
                     "--out", str(tmp_path)])
    assert code == 2
    err = capsys.readouterr().err
    assert "detectability" in err
    assert "eigenvalue" in err


def test_sweep_csv_shape(tmp_path, awgn_config):
    out = tmp_path / "sweep_out"
    out.mkdir()
    code = cli.main(["sweep", awgn_config, "--sweep", "p=0.5:4:8",
                     "--out", str(out)])
    assert code == 0
    raw = (out / "sweep.csv").read_bytes()
    assert raw.count(b"\r\n") >= 9
    rows = list(csv.reader(raw.decode().splitlines()))
    assert rows[0] == ["sweep_value", "Jstar", "p_used", "capacity_nats",
                       "capacity_bits", "certified", "status"]
    assert len(rows) == 9
    vals = [float(r[3]) for r in rows[1:]]
    budgets = [float(r[0]) for r in rows[1:]]
    for b, v in zip(budgets, vals):
        assert v == pytest.approx(0.5 * math.log1p(b), abs=1e-6)
    assert all(r[6] == "ok" for r in rows[1:])


def test_sweep_marks_infeasible_points(tmp_path, two_state_config):
    out = tmp_path / "sweep_two"
    out.mkdir()
    lo = TWO_STATE_JSTAR - 1.0
    hi = TWO_STATE_JSTAR + 3.0
    code = cli.main(["sweep", two_state_config,
                     "--sweep", f"p={lo}:{hi}:5", "--out", str(out)])
    assert code == 0
    rows = list(csv.reader((out / "sweep.csv").read_text().splitlines()))
    assert rows[1][6] == "infeasible"
    assert rows[1][3] == ""
    assert rows[-1][6] == "ok"
    # capacity column is nondecreasing over the feasible tail
    feas = [float(r[3]) for r in rows[1:] if r[6] == "ok"]
    assert all(b >= a - 2e-8 for a, b in zip(feas, feas[1:]))


def test_sweep_gain_scaling_with_floor_tracking(tmp_path, two_state_config):
    out = tmp_path / "sweep_g"
    out.mkdir()
    code = cli.main(["sweep", two_state_config, "--sweep", "g=0.5:1.5:3",
                     "--p-mode", "jstar-plus:5", "--out", str(out)])
    assert code == 0
    rows = list(csv.reader((out / "sweep.csv").read_text().splitlines()))
    assert len(rows) == 4
    floors = [float(r[1]) for r in rows[1:]]
    used = [float(r[2]) for r in rows[1:]]
    for f, u in zip(floors, used):
        assert u == pytest.approx(f + 5.0, abs=1e-9)
    # cheaper control for a stronger input: the floor drops with gain
    assert floors[0] > floors[1] > floors[2]


def test_sweep_bad_spec_is_config_error(tmp_path, awgn_config, capsys):
    code = cli.main(["sweep", awgn_config, "--sweep", "q=1:2:3",
                     "--out", str(tmp_path)])
    assert code == 2
    code = cli.main(["sweep", awgn_config, "--sweep", "p=1:2",
                     "--out", str(tmp_path)])
    assert code == 2


def test_verify_command(tmp_path, awgn_config):
    out = tmp_path / "verify_out"
    out.mkdir()
    code = cli.main(["verify", awgn_config, "--p", "1", "--out", str(out)])
    assert code == 0
    doc = json.loads((out / "verify_result.json").read_text())
    assert doc["equivalence"]["delta"] <= 1e-7
    assert doc["equivalence"]["certified_blocks"] is True


def test_simulate_deterministic_output(tmp_path, awgn_config):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    out_a.mkdir()
    out_b.mkdir()
    args = ["simulate", awgn_config, "--p", "1", "--horizon", "4000",
            "--trials", "2", "--burn-in", "200", "--seed", "12"]
    assert cli.main(args + ["--out", str(out_a)]) == 0
    assert cli.main(args + ["--out", str(out_b)]) == 0
    assert ((out_a / "simulate_result.json").read_bytes()
            == (out_b / "simulate_result.json").read_bytes())


def test_rerun_replays_manifest(tmp_path, awgn_config):
    first = tmp_path / "first"
    first.mkdir()
    assert cli.main(["capacity", awgn_config, "--p", "2",
                     "--out", str(first)]) == 0
    second = tmp_path / "second"
    second.mkdir()
    manifest = first / "capacity_result.manifest.json"
    assert cli.main(["rerun", str(manifest), "--out", str(second)]) == 0
    assert ((first / "capacity_result.json").read_bytes()
            == (second / "capacity_result.json").read_bytes())


def test_simulate_refuses_uncertified(tmp_path, awgn_config, monkeypatch,
                                      capsys):
    real = compute_capacity

    def doctored(system, budget, options=None):
        sol, cert = real(system, budget, options)
        bad = dataclasses.replace(cert, certified=False)
        sol = dataclasses.replace(sol, certificate=bad)
        return sol, bad

    monkeypatch.setattr(cli, "compute_capacity", doctored)
    args = ["simulate", awgn_config, "--p", "1", "--horizon", "2000",
            "--trials", "1", "--burn-in", "100", "--out", str(tmp_path)]
    code = cli.main(args)
    assert code == 4
    assert "uncertified" in capsys.readouterr().err.lower()
    assert cli.main(args + ["--uncertified-ok"]) == 0


def test_version_flag(capsys):
    with pytest.raises(SystemExit):
        # argparse handles --version itself
        cli._build_parser().parse_args(["--version"])
    assert cli.main(["--version"]) == 0
    assert capsys.readouterr().out.strip().endswith("0.1.0")


def test_missing_required_p_exits_2(awgn_config, capsys):
    assert cli.main(["capacity", awgn_config]) == 2
    capsys.readouterr()
