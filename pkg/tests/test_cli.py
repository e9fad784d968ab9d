import json

import numpy as np
import pytest

from filament_band.cli import main, parse_beta, read_config, read_state_csv
from filament_band.model import beta0


def run(capsys, *argv):
    code = main(list(argv))
    return code, json.loads(capsys.readouterr().out)


def test_parse_beta():
    assert parse_beta("0.2", 0.25) == 0.2
    assert parse_beta("x1.01b0", 0.75) == pytest.approx(1.01 * beta0(0.75))
    assert parse_beta("x1e0b0", 0.25) == pytest.approx(beta0(0.25))
    with pytest.raises(ValueError):
        parse_beta("1.01b0", 0.25)


def test_read_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\ngamma = 0.25\n--beta = x0.99b0  # trailing\n\n")
    assert read_config(path) == {"gamma": "0.25", "beta": "x0.99b0"}
    path.write_text("gamma 0.25\n")
    with pytest.raises(ValueError):
        read_config(path)


def test_normalform(capsys):
    code, out = run(capsys, "normalform", "--gamma", "0.75", "--beta", "x0.99b0")
    assert code == 0
    assert out["supercritical"] and out["beta0"] == pytest.approx(beta0(0.75))
    assert out["amplitude"] > 0


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("gamma = 0.25\nbeta = x1.01b0\n")
    _, out = run(capsys, "normalform", "--config", str(cfg))
    assert out["gamma"] == 0.25 and not out["supercritical"]
    _, out = run(capsys, "normalform", "--config", str(cfg), "--gamma", "0.75")
    assert out["gamma"] == 0.75 and out["beta"] == pytest.approx(1.01 * beta0(0.75))
    cfg.write_text("colour = red\n")
    with pytest.raises(SystemExit):
        main(["normalform", "--config", str(cfg)])


def test_linearize(capsys):
    code, out = run(capsys, "linearize", "--gamma", "0.75", "--beta", "x1.01b0", "--n", "40")
    assert code == 0
    assert out["leading_growth_rate"] < 0
    assert out["leading_nontrivial"][0] == out["leading_growth_rate"]
    assert abs(out["discrete_beta0"] / out["beta0"] - 1) < 0.02


def test_unknown_scenario():
    with pytest.raises(SystemExit):
        main(["simulate", "--scenario", "nope"])


def test_simulate_then_classify(tmp_path, capsys):
    out_dir = tmp_path / "run"
    code, summary = run(
        capsys, "simulate", "--scenario", "example-1-2", "--t-final", "20", "--out", str(out_dir)
    )
    assert code == 0 and summary["status"] == "ok"
    header = (out_dir / "trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("t,z1x,z1y,z2x") and header.endswith("phi40")
    seed = read_state_csv(out_dir / "trajectory.csv")
    assert seed.n == 40
    code, motion = run(
        capsys, "classify", "--input", str(out_dir / "trajectory.csv"), "--gamma", "0.75",
        "--beta", "x0.99b0", "--window-start", "0", "--window-end", "20",
    )
    assert code == 0 and motion["label"] in {"Traveling", "Chaotic", "Spinning", "Whirling"}


def test_branch(tmp_path, capsys):
    path = tmp_path / "branch.csv"
    code, out = run(
        capsys, "branch", "--gamma", "0.75", "--beta", "x0.99b0",
        "--beta-min", "0.085", "--beta-max", "0.09", "--out", str(path),
    )
    assert code == 0 and out["points"] >= 2
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    assert data.shape[1] == 6
    assert np.all(data[:, 5] < 1e-9)
