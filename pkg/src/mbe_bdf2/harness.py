"""Experiment drivers: temporal convergence on uniform/random meshes, the
consistency-error diagnostic, the uniform-vs-adaptive benchmark, mesh
audits, and report emission."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.integrate import quad

from . import io
from .adaptive import AdaptiveConfig, accepted_ratios, run_adaptive
from .grid import GridSpec
from .kernels import (
    Bdf2Kernels,
    StabilityError,
    audit_doc_kernels,
    compute_m_r,
    doc_table_recursive,
)
from .model import (
    MbeParams,
    manufactured_forcing,
    manufactured_solution,
    benchmark_initial_condition,
)
from .report import RunReport
from .stepper import ProgressPrinter, SnapshotRecorder, SolverConfig, run_simulation
from .time_mesh import (
    R_S,
    TimeMesh,
    check_energy_step_restriction,
    check_s1,
    check_s2,
    random_mesh,
    uniform_mesh,
)

SNAPSHOT_TIMES = (0.0, 1.0, 5.0, 10.0, 20.0, 30.0)
EPS_SWEEP = (0.2, 0.1, 0.05)

AUDIT_SCHEMA = {
    "type": "object",
    "required": ["N", "T", "s1", "s2", "energy_restriction", "tau_le_4eps", "m_r", "doc"],
    "properties": {
        "N": {"type": "integer", "minimum": 0},
        "T": {"type": "number"},
        "max_step": {"type": ["number", "null"]},
        "max_ratio": {"type": ["number", "null"]},
        "s1": {
            "type": "object",
            "required": ["satisfied", "violations"],
            "properties": {"satisfied": {"type": "boolean"}, "violations": {"type": "integer"}},
        },
        "s2": {
            "type": "object",
            "required": ["N0", "fraction", "satisfied"],
            "properties": {
                "N0": {"type": "integer"},
                "fraction": {"type": "number"},
                "satisfied": {"type": "boolean"},
            },
        },
        "energy_restriction": {
            "type": "object",
            "required": ["satisfied", "violations"],
            "properties": {"satisfied": {"type": "boolean"}, "violations": {"type": "integer"}},
        },
        "tau_le_4eps": {"type": "boolean"},
        "m_r": {"type": ["number", "null"]},
        "m_r_levels_checked": {"type": "integer"},
        "m_r_error": {"type": ["string", "null"]},
        "convergence_step_condition": {
            "type": "object",
            "properties": {"bound": {"type": ["number", "null"]}, "levels_satisfied": {"type": "integer"}},
        },
        "doc": {
            "type": ["object", "null"],
            "properties": {
                "orthogonality_deviation": {"type": "number"},
                "row_sum_deviation": {"type": "number"},
                "recursion_vs_closed_form": {"type": "number"},
                "min_theta": {"type": "number"},
            },
        },
        "doc_skipped_reason": {"type": ["string", "null"]},
    },
}


# mesh audit -------------------------------------------------------------------


def _checkpoints(N: int, max_full: int, count: int) -> List[int]:
    if N <= max_full:
        return list(range(1, N + 1))
    pts = np.unique(np.round(np.geomspace(1, N, count)).astype(int))
    return sorted(set(pts.tolist()) | {N})


def audit_mesh(mesh: TimeMesh, eps: float, max_dense: int = 2000, m_r_checkpoints: int = 200) -> dict:
    """Step-condition and kernel diagnostics for a mesh.

    DOC-table checks are dense (O(N^2) memory) and skipped above
    ``max_dense`` levels; ``M_r`` is then maximised over geometric checkpoints.
    """
    N = mesh.N
    audit = {"N": N, "T": mesh.T, "max_step": mesh.max_step if N else None}
    audit["max_ratio"] = float(mesh.ratios.max()) if N else None
    s1 = check_s1(mesh)
    s2 = check_s2(mesh)
    audit["s1"] = {"satisfied": s1.satisfied, "violations": len(s1.violations)}
    audit["s2"] = {"N0": s2.N0, "fraction": s2.fraction, "satisfied": s2.satisfied}
    if N:
        restriction = check_energy_step_restriction(mesh, eps)
        audit["energy_restriction"] = {"satisfied": restriction.satisfied, "violations": len(restriction.violations)}
        audit["tau_le_4eps"] = bool(np.all(mesh.steps <= 4.0 * eps))
    else:
        audit["energy_restriction"] = {"satisfied": True, "violations": 0}
        audit["tau_le_4eps"] = True

    audit["m_r"], audit["m_r_error"], audit["m_r_levels_checked"] = None, None, 0
    audit["convergence_step_condition"] = {"bound": None, "levels_satisfied": 0}
    if N:
        levels = _checkpoints(N, max_dense, m_r_checkpoints)
        try:
            m_r = compute_m_r(mesh, levels)
            audit["m_r"] = m_r
            audit["m_r_levels_checked"] = len(levels)
            bound = eps / (16.0 * m_r**2)
            audit["convergence_step_condition"] = {
                "bound": bound,
                "levels_satisfied": int(np.sum(mesh.steps <= bound)),
            }
        except StabilityError as exc:
            audit["m_r_error"] = str(exc)

    audit["doc"], audit["doc_skipped_reason"] = None, None
    if N == 0:
        audit["doc_skipped_reason"] = "empty mesh"
    elif N > max_dense:
        audit["doc_skipped_reason"] = f"N={N} exceeds dense DOC limit {max_dense}"
    else:
        doc = audit_doc_kernels(mesh)
        audit["doc"] = {
            "orthogonality_deviation": doc.orthogonality_deviation,
            "row_sum_deviation": doc.row_sum_deviation,
            "recursion_vs_closed_form": doc.recursion_vs_closed_form,
            "min_theta": doc.min_theta,
        }
    return audit


# convergence study ------------------------------------------------------------


@dataclass
class ConvergenceRow:
    N: int
    tau_max: float
    error: float
    order: Optional[float]
    max_ratio: float
    N1: int
    raw_error: float
    seed: Optional[int] = None
    fp_residual: float = 0.0


def convergence_orders(errors: Sequence[float], taus: Sequence[float]) -> List[Optional[float]]:
    """``log(e(N)/e(2N)) / log(tau(N)/tau(2N))`` between consecutive rows."""
    orders: List[Optional[float]] = [None]
    for i in range(1, len(errors)):
        orders.append(math.log(errors[i - 1] / errors[i]) / math.log(taus[i - 1] / taus[i]))
    return orders


def study_mesh(kind: str, N: int, seed: int, T: float) -> TimeMesh:
    if kind == "uniform":
        return uniform_mesh(T, N)
    if kind == "random":
        return random_mesh(T, N, seed)
    raise ValueError(f"unknown mesh kind {kind!r}")


def _manufactured_run(mesh, grid, params, solver_cfg):
    phi0 = manufactured_solution(0.0, grid)
    report = run_simulation(phi0, mesh, grid, params, solver_cfg,
                            forcing=lambda t: manufactured_forcing(t, grid, params))
    return report.final, report["fp_residual"].max()


def convergence_study(kind: str = "uniform", N_list: Sequence[int] = (20, 40, 80, 160), seed: int = 0,
                      grid: GridSpec = GridSpec(M=64), params: MbeParams = MbeParams(0.1), T: float = 1.0,
                      solver_cfg: SolverConfig = SolverConfig(), spatial_correction: bool = True,
                      reference_factor: int = 16, n_jobs: Optional[int] = 1) -> List[ConvergenceRow]:
    """Temporal errors of the manufactured problem on a sequence of meshes.

    Every row of a random study draws its mesh from the same ``seed``, so
    the refinements share the leading random draws. With
    ``spatial_correction`` the fixed-grid spatial error is removed by
    measuring against a fine uniform-step solution on the same grid,
    ``e(N) = ||(Phi(T) - phi^N) - (Phi(T) - phi_ref)||``; ``raw_error`` is
    always the plain error against ``Phi(T)`` at the nodes.
    """
    N_list = [int(n) for n in N_list]
    meshes = [study_mesh(kind, N, seed, T) for N in N_list]
    jobs = [delayed(_manufactured_run)(m, grid, params, solver_cfg) for m in meshes]
    if spatial_correction:
        jobs.append(delayed(_manufactured_run)(uniform_mesh(T, reference_factor * max(N_list)), grid, params,
                                               solver_cfg))
    results = Parallel(n_jobs=n_jobs)(jobs)
    exact = manufactured_solution(T, grid)
    reference = results[-1][0] if spatial_correction else exact
    raw = [grid.norm(exact - r[0]) for r in results[: len(meshes)]]
    errors = [grid.norm(reference - r[0]) for r in results[: len(meshes)]]
    taus = [m.max_step for m in meshes]
    orders = convergence_orders(errors, taus)
    rows = []
    for i, mesh in enumerate(meshes):
        rows.append(ConvergenceRow(
            N=mesh.N,
            tau_max=taus[i],
            error=errors[i],
            order=orders[i],
            max_ratio=float(mesh.ratios.max()),
            N1=len(check_s1(mesh).violations),
            raw_error=raw[i],
            seed=mesh.seed,
            fp_residual=float(results[i][1]),
        ))
    return rows


def write_convergence_csv(rows: Sequence[ConvergenceRow], path):
    import csv

    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["N", "tau", "e", "order", "max_r", "N1", "e_raw", "seed"])
        for r in rows:
            writer.writerow([r.N, repr(r.tau_max), repr(r.error), "" if r.order is None else repr(r.order),
                             repr(r.max_ratio), r.N1, repr(r.raw_error), "" if r.seed is None else r.seed])
    return path


# consistency error --------------------------------------------------------------


@dataclass
class ConsistencyDiagnostic:
    xi: np.ndarray
    Xi: np.ndarray
    lhs: float
    rhs: float
    holds: bool
    pointwise_bounds: np.ndarray
    pointwise_holds: bool


def _abs_integral(fun, a, b):
    val, _ = quad(lambda s: abs(fun(s)), a, b, limit=200, epsabs=0.0, epsrel=1e-12)
    return val


def consistency_diagnostic(mesh: TimeMesh, phi: Callable, dphi: Callable, d2phi: Callable,
                           d3phi: Callable) -> ConsistencyDiagnostic:
    """Local errors ``xi^j = D_2 Phi(t_j) - Phi'(t_j)`` of a scalar probe, their
    DOC convolution ``Xi^k``, and the bound on ``sum_k |Xi^k|`` in terms of
    integrals of ``|Phi''|`` and ``|Phi'''|``."""
    kern = Bdf2Kernels.from_mesh(mesh)
    t = mesh.levels
    vals = np.array([phi(s) for s in t])
    xi = np.array([
        float(kern.b0[n - 1] * (vals[n] - vals[n - 1]) + (kern.b1[n - 1] * (vals[n - 1] - vals[n - 2]) if n >= 2 else 0.0))
        - dphi(t[n])
        for n in range(1, mesh.N + 1)
    ])
    doc = doc_table_recursive(mesh)
    Xi = doc.convolve(xi)

    tau = mesh.steps
    r = mesh.ratios
    q = r**2 / (1.0 + 2.0 * r)
    q[0] = 1.0
    prods = np.cumprod(q)  # prod_{i=2}^k for k = 1..N
    int2 = _abs_integral(d2phi, t[0], t[1])
    int3 = np.array([_abs_integral(d3phi, t[j - 1], t[j]) for j in range(1, mesh.N + 1)])
    lhs = float(np.sum(np.abs(Xi)))
    rhs = float(tau[0] * int2 * prods.sum() + 3.0 * (t[-1] - t[0]) * np.max(tau * int3))
    pointwise = doc.theta[:, 0] * int2 + 3.0 * doc.convolve(tau * int3)
    slack = 1e-12 * (np.abs(pointwise) + 1e-300)
    return ConsistencyDiagnostic(
        xi=xi,
        Xi=Xi,
        lhs=lhs,
        rhs=rhs,
        holds=lhs <= rhs * (1.0 + 1e-12),
        pointwise_bounds=pointwise,
        pointwise_holds=bool(np.all(np.abs(Xi) <= pointwise + slack)),
    )


# benchmark ----------------------------------------------------------------------


def initial_field(ic: str, grid: GridSpec):
    """``builtin:benchmark`` or ``file:<csv>``; ``builtin:paper51`` is accepted as an alias."""
    if ic in ("builtin:benchmark", "benchmark", "builtin:paper51"):
        return benchmark_initial_condition(grid)
    if ic.startswith("file:"):
        phi, file_grid, _ = io.read_field_csv(ic[5:])
        if file_grid.M != grid.M or not math.isclose(file_grid.L, grid.L):
            raise ValueError(f"initial field grid (L={file_grid.L}, M={file_grid.M}) does not match "
                             f"(L={grid.L}, M={grid.M})")
        return phi
    raise ValueError(f"unknown initial condition {ic!r}")


def benchmark_run(mode: str = "uniform", eps: float = 0.1, grid: GridSpec = GridSpec(M=128), T: float = 30.0,
                  tau: float = 1e-3, adaptive_cfg: AdaptiveConfig = AdaptiveConfig(), tau_init: Optional[float] = None,
                  snapshots: Sequence[float] = SNAPSHOT_TIMES, phi0=None,
                  solver_cfg: SolverConfig = SolverConfig(), strict: bool = False, progress: int = 0,
                  audit: bool = True) -> RunReport:
    """Unforced run from the benchmark initial data (or ``phi0``)."""
    params = MbeParams(eps)
    if phi0 is None:
        phi0 = benchmark_initial_condition(grid)
    observers = [SnapshotRecorder([s for s in snapshots if s <= T])]
    if progress:
        observers.append(ProgressPrinter(progress))
    config = {"mode": mode, "eps": eps, "L": grid.L, "M": grid.M, "T": T, "solver": asdict(solver_cfg),
              "snapshots": list(snapshots), "strict": strict}
    if mode == "uniform":
        N = int(round(T / tau))
        if not math.isclose(N * tau, T, rel_tol=1e-9):
            raise ValueError(f"T={T} is not a whole number of steps of size tau={tau}")
        mesh = uniform_mesh(T, N)
        report = run_simulation(phi0, mesh, grid, params, solver_cfg, observers=observers, strict=strict)
        config.update(tau=tau, N=N)
    elif mode == "adaptive":
        tau_init = adaptive_cfg.tau_min if tau_init is None else tau_init
        report = run_adaptive(phi0, T, tau_init, grid, params, adaptive_cfg, solver_cfg,
                              observers=observers, strict=strict)
        config.update(adaptive=asdict(adaptive_cfg), tau_init=tau_init)
        mesh = TimeMesh(report["t"])
        r = accepted_ratios(report)
        report.audit["max_accepted_ratio"] = float(r.max()) if r.size else 0.0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    report.config.update(config)
    if audit:
        report.audit.update(audit_mesh(mesh, eps))
    return report


def eps_sweep(eps_values: Sequence[float] = EPS_SWEEP, **kwargs) -> dict:
    return {eps: benchmark_run(eps=eps, **kwargs) for eps in eps_values}


def compare_final_energy(a: RunReport, b: RunReport) -> float:
    """Relative difference of the final energies (``b`` is the reference)."""
    Ea, Eb = a["E"][-1], b["E"][-1]
    return abs(Ea - Eb) / abs(Eb)


def interpolated_energy_gap(coarse: RunReport, fine: RunReport) -> float:
    """Max relative gap of the coarse energy series against the fine one, interpolated in t."""
    Ef = np.interp(coarse["t"], fine["t"], fine["E"])
    scale = np.max(np.abs(fine["E"]))
    return float(np.max(np.abs(coarse["E"] - Ef)) / scale)


# output --------------------------------------------------------------------------


def emit_report(report: RunReport, out_dir, grid: Optional[GridSpec] = None) -> List[Path]:
    """Write ``timeseries.csv``, ``snapshots/t_<time>.csv``, ``mesh.csv``, ``audit.json`` and ``config.json``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = [io.write_timeseries_csv(report, out / "timeseries.csv")]
        if report.snapshots:
            if grid is None:
                grid = GridSpec(L=report.config.get("L", 2 * math.pi), M=next(iter(report.snapshots.values())).shape[0])
            snap_dir = out / "snapshots"
            snap_dir.mkdir(exist_ok=True)
            for t_req, phi in sorted(report.snapshots.items()):
                t_act = report.snapshot_times.get(t_req, t_req)
                written.append(io.write_field_csv(phi, grid, t_act, snap_dir / f"t_{t_req:g}.csv"))
        if len(report):
            written.append(io.write_mesh_csv(TimeMesh(report["t"]), out / "mesh.csv"))
        audit = dict(report.audit)
        if not len(report) or "s1" not in audit:
            mesh = TimeMesh(report["t"] if len(report) else [0.0])
            audit = {**audit_mesh(mesh, report.config.get("eps", 0.1)), **audit}
        audit["accepted"] = report.accepted
        audit["rejected"] = report.rejected
        audit["flags"] = list(report.flags)
        written.append(io.write_json(audit, out / "audit.json"))
        written.append(io.write_json(report.config, out / "config.json"))
    except OSError as exc:
        raise OSError(f"could not write report to {out}: {exc}") from exc
    return written
