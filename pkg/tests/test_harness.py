import json
import math

import jsonschema
import numpy as np
import pytest

from mbe_bdf2 import io
from mbe_bdf2.adaptive import AdaptiveConfig
from mbe_bdf2.grid import GridSpec
from mbe_bdf2.harness import (
    AUDIT_SCHEMA,
    audit_mesh,
    benchmark_run,
    compare_final_energy,
    consistency_diagnostic,
    convergence_orders,
    convergence_study,
    emit_report,
    initial_field,
    interpolated_energy_gap,
    study_mesh,
    write_convergence_csv,
)
from mbe_bdf2.model import benchmark_initial_condition
from mbe_bdf2.report import RunReport
from mbe_bdf2.time_mesh import TimeMesh, check_s1, random_mesh, random_s1_mesh, uniform_mesh


def test_convergence_orders():
    orders = convergence_orders([4.0, 1.0, 0.25], [0.2, 0.1, 0.05])
    assert orders[0] is None
    assert orders[1:] == pytest.approx([2.0, 2.0])


def test_study_mesh():
    assert study_mesh("uniform", 8, 0, 1.0) == uniform_mesh(1.0, 8)
    assert study_mesh("random", 8, 3, 1.0) == random_mesh(1.0, 8, 3)
    with pytest.raises(ValueError):
        study_mesh("geometric", 8, 0, 1.0)


def test_small_uniform_convergence_study(tmp_path):
    rows = convergence_study("uniform", [10, 20, 40], grid=GridSpec(M=16))
    assert [r.N for r in rows] == [10, 20, 40]
    assert rows[-1].order == pytest.approx(2.0, abs=0.1)
    assert all(r.N1 == 0 for r in rows)
    assert rows[0].raw_error > rows[0].error * 0.0
    path = write_convergence_csv(rows, tmp_path / "conv.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "N,tau,e,order,max_r,N1,e_raw,seed"
    assert len(lines) == 4


@pytest.mark.filterwarnings("ignore::mbe_bdf2.stepper.StepSizeWarning")
def test_random_convergence_rows_share_the_seed():
    rows = convergence_study("random", [8, 16], seed=11, grid=GridSpec(M=8), reference_factor=4)
    assert [r.seed for r in rows] == [11, 11]
    assert [r.N1 for r in rows] == [len(check_s1(random_mesh(1.0, N, 11)).violations) for N in (8, 16)]


def test_consistency_bound_cosine():
    for seed in range(3):
        mesh = random_s1_mesh(1.0, 40, seed)
        diag = consistency_diagnostic(mesh, math.cos, lambda t: -math.sin(t), lambda t: -math.cos(t), math.sin)
        assert diag.holds and diag.pointwise_holds
        assert diag.lhs > 0


def test_audit_mesh_schema():
    audit = audit_mesh(random_s1_mesh(1.0, 50, 0), 0.1)
    jsonschema.validate(json.loads(io.dumps(audit)), AUDIT_SCHEMA)
    assert audit["s1"]["satisfied"]
    assert audit["doc"]["orthogonality_deviation"] < 1e-12
    assert audit["m_r"] < 39


def test_audit_mesh_large_mesh_uses_checkpoints():
    audit = audit_mesh(uniform_mesh(10.0, 3000), 0.1, max_dense=2000, m_r_checkpoints=50)
    assert audit["doc"] is None
    assert "exceeds" in audit["doc_skipped_reason"]
    assert 0 < audit["m_r_levels_checked"] <= 51
    jsonschema.validate(json.loads(io.dumps(audit)), AUDIT_SCHEMA)


def test_audit_mesh_reports_unstable_mesh():
    tau = [1.0] + [10.0**k for k in range(1, 8)]
    audit = audit_mesh(TimeMesh(np.concatenate(([0.0], np.cumsum(tau)))), 0.1)
    assert not audit["s1"]["satisfied"]
    assert audit["m_r"] is None and audit["m_r_error"]


def test_mesh_csv_round_trip(tmp_path):
    mesh = random_mesh(1.0, 25, 9)
    back = io.read_mesh_csv(io.write_mesh_csv(mesh, tmp_path / "m.csv"))
    np.testing.assert_array_equal(back.levels, mesh.levels)
    assert back.seed == 9


def test_field_csv_round_trip(tmp_path):
    grid = GridSpec(M=8)
    phi = benchmark_initial_condition(grid)
    back, g, t = io.read_field_csv(io.write_field_csv(phi, grid, 0.125, tmp_path / "f.csv"))
    np.testing.assert_array_equal(back, phi)
    assert g == grid and t == 0.125


def test_benchmark_and_emit(tmp_path):
    grid = GridSpec(M=16)
    uni = benchmark_run("uniform", grid=grid, T=0.2, tau=1e-3, snapshots=(0.0, 0.1))
    ada = benchmark_run("adaptive", grid=grid, T=0.2, snapshots=(0.0, 0.1, 5.0))
    assert uni.accepted == 200
    assert compare_final_energy(ada, uni) < 1e-2
    assert interpolated_energy_gap(uni, ada) < 1e-2
    assert set(ada.snapshots) == {0.0, 0.1}
    assert ada.audit["max_accepted_ratio"] < 3.57
    written = emit_report(ada, tmp_path / "out", grid)
    names = {p.name for p in written}
    assert {"timeseries.csv", "mesh.csv", "audit.json", "config.json", "t_0.1.csv"} <= names
    series = io.read_timeseries_csv(tmp_path / "out" / "timeseries.csv")
    np.testing.assert_array_equal(series["E"], ada["E"])
    np.testing.assert_array_equal(series["step"], ada["step"])
    audit = json.loads((tmp_path / "out" / "audit.json").read_text())
    jsonschema.validate(audit, AUDIT_SCHEMA)
    assert audit["accepted"] == ada.accepted
    config = json.loads((tmp_path / "out" / "config.json").read_text())
    assert config["mode"] == "adaptive" and config["M"] == 16


def test_benchmark_validation():
    with pytest.raises(ValueError):
        benchmark_run("uniform", grid=GridSpec(M=8), T=0.1, tau=0.03)
    with pytest.raises(ValueError):
        benchmark_run("magic", grid=GridSpec(M=8), T=0.1)


def test_initial_field(tmp_path):
    grid = GridSpec(M=8)
    np.testing.assert_array_equal(initial_field("builtin:benchmark", grid), benchmark_initial_condition(grid))
    path = io.write_field_csv(np.ones(grid.shape), grid, 0.0, tmp_path / "ic.csv")
    np.testing.assert_array_equal(initial_field(f"file:{path}", grid), np.ones(grid.shape))
    with pytest.raises(ValueError):
        initial_field(f"file:{path}", GridSpec(M=16))
    with pytest.raises(ValueError):
        initial_field("builtin:nope", grid)


def test_report_rejects_time_going_backwards():
    rep = RunReport()
    rep.append(step=0, t=0.0, tau=0.0, ratio=0.0, E=1.0)
    with pytest.raises(ValueError):
        rep.append(step=1, t=0.0, tau=0.1, ratio=0.0, E=1.0)


def test_consistency_exact_on_linear_and_quadratic():
    mesh = random_s1_mesh(1.0, 30, 4)
    zero = lambda t: 0.0
    lin = consistency_diagnostic(mesh, lambda t: t, lambda t: 1.0, zero, zero)
    assert np.max(np.abs(lin.xi)) < 1e-12
    assert np.max(np.abs(lin.Xi)) < 1e-12
    quad = consistency_diagnostic(mesh, lambda t: t * t, lambda t: 2 * t, lambda t: 2.0, zero)
    tau1 = mesh.tau(1)
    assert quad.xi[0] == pytest.approx(-tau1)
    assert np.max(np.abs(quad.xi[1:])) < 1e-9
    assert quad.holds


def test_consistency_uniform_mesh():
    diag = consistency_diagnostic(uniform_mesh(1.0, 50), math.cos, lambda t: -math.sin(t),
                                  lambda t: -math.cos(t), math.sin)
    assert diag.holds and diag.pointwise_holds
