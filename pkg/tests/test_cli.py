import json

import pytest

from mbe_bdf2 import io
from mbe_bdf2.cli import EXIT_INPUT, EXIT_OK, EXIT_SOLVER, main
from mbe_bdf2.time_mesh import random_mesh, random_s1_mesh


@pytest.fixture
def mesh_file(tmp_path):
    return str(io.write_mesh_csv(random_s1_mesh(1.0, 20, 1), tmp_path / "mesh.csv"))


def test_converge(tmp_path, capsys):
    assert main(["converge", "--N", "8,16", "--grid", "8", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "order" in out
    assert (tmp_path / "convergence.csv").exists()
    assert json.loads((tmp_path / "config.json").read_text())["N"] == [8, 16]


def test_kernels_json(mesh_file, capsys):
    assert main(["kernels", "--mesh", mesh_file]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["N"] == 20
    assert len(doc["b0"]) == 20
    assert doc["orthogonality_deviation"] < 1e-12
    assert doc["s1"]["satisfied"]
    assert doc["m_r"] < 39


def test_kernels_on_unstable_mesh(tmp_path, capsys):
    path = io.write_mesh_csv(random_mesh(1.0, 40, 0), tmp_path / "bad.csv")
    assert main(["kernels", "--mesh", str(path)]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert not doc["s1"]["satisfied"]


def test_check_mesh_writes_file(mesh_file, tmp_path):
    out = tmp_path / "check.json"
    assert main(["check-mesh", "--mesh", mesh_file, "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["s1"]["satisfied"]
    assert "energy_restriction" in doc


def test_simulate_with_config_and_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mode": "uniform", "grid": 8, "T": 0.5, "tau": 0.01, "snapshots": "0"}))
    out = tmp_path / "run"
    assert main(["--config", str(cfg), "simulate", "--T", "0.1", "--out", str(out)]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["accepted"] == 10
    assert (out / "timeseries.csv").exists()
    assert (out / "snapshots" / "t_0.csv").exists()


@pytest.mark.filterwarnings("ignore::mbe_bdf2.stepper.StepSizeWarning")
def test_exit_codes(tmp_path, capsys):
    assert main(["kernels", "--mesh", str(tmp_path / "missing.csv")]) == EXIT_INPUT
    assert main(["simulate", "--bogus"]) == EXIT_INPUT
    assert main(["--config", str(tmp_path / "missing.json"), "simulate"]) == EXIT_INPUT
    assert main(["simulate", "--grid", "7", "--T", "0.1"]) == EXIT_INPUT
    assert main(["simulate", "--mode", "uniform", "--T", "0.1", "--tau", "0.03", "--grid", "8"]) == EXIT_INPUT
    code = main(["simulate", "--mode", "uniform", "--grid", "16", "--T", "100", "--tau", "50",
                 "--eps", "0.001", "--fp-tol", "1e-14"])
    assert code == EXIT_SOLVER
    assert "solver failure" in capsys.readouterr().err
