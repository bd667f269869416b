"""Command line interface.

Subcommands: ``converge``, ``simulate``, ``kernels``, ``check-mesh``. Any
flag may also come from a JSON file given with ``--config`` (keys use the
flag name without leading dashes); explicit flags win.

Exit codes: 0 success, 1 solver failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io
from .adaptive import AdaptiveConfig
from .grid import GridSpec
from .harness import (
    SNAPSHOT_TIMES,
    audit_mesh,
    benchmark_run,
    convergence_study,
    emit_report,
    initial_field,
    write_convergence_csv,
)
from .kernels import Bdf2Kernels, StabilityError, audit_doc_kernels, compute_m_r
from .model import MbeParams
from .stepper import FixedPointError, SolverConfig
from .time_mesh import check_energy_step_restriction, check_s1, check_s2

EXIT_OK, EXIT_SOLVER, EXIT_INPUT = 0, 1, 2

log = logging.getLogger("mbe_bdf2")


def _float_list(text):
    return [float(x) for x in str(text).split(",") if x.strip()]


def _int_list(text):
    return [int(x) for x in str(text).split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mbe-bdf2", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file supplying default flag values")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    conv = sub.add_parser("converge", help="temporal convergence study with a manufactured solution")
    conv.add_argument("--kind", choices=["uniform", "random"], default="uniform")
    conv.add_argument("--N", type=_int_list, default=[20, 40, 80, 160], help="comma-separated step counts")
    conv.add_argument("--seed", type=int, default=0)
    conv.add_argument("--eps", type=float, default=0.1)
    conv.add_argument("--grid", type=int, default=64, help="points per side")
    conv.add_argument("--T", type=float, default=1.0)
    conv.add_argument("--raw-error", action="store_true", help="do not remove the fixed-grid spatial error")
    conv.add_argument("--jobs", type=int, default=1)
    conv.add_argument("--out")

    sim = sub.add_parser("simulate", help="unforced run, uniform or adaptive steps")
    sim.add_argument("--mode", choices=["uniform", "adaptive"], default="adaptive")
    sim.add_argument("--eps", type=float, default=0.1)
    sim.add_argument("--grid", type=int, default=128)
    sim.add_argument("--L", type=float, default=2 * math.pi)
    sim.add_argument("--T", type=float, default=30.0)
    sim.add_argument("--tau", type=float, default=1e-3)
    sim.add_argument("--tol", type=float, default=1e-3)
    sim.add_argument("--safety", type=float, default=0.9)
    sim.add_argument("--tau-min", type=float, default=1e-4)
    sim.add_argument("--tau-max", type=float, default=0.1)
    sim.add_argument("--tau-init", type=float, default=None)
    sim.add_argument("--fp-tol", type=float, default=1e-12)
    sim.add_argument("--ic", default="builtin:benchmark", help="builtin:benchmark or file:<csv>")
    sim.add_argument("--snapshots", type=_float_list, default=list(SNAPSHOT_TIMES))
    sim.add_argument("--progress", type=int, default=0, help="print a progress line every N levels")
    sim.add_argument("--strict", action="store_true", help="abort on theory-grade step condition violations")
    sim.add_argument("--out")

    kern = sub.add_parser("kernels", help="kernel diagnostics for a mesh CSV")
    kern.add_argument("--mesh", required=True)
    kern.add_argument("--out")

    chk = sub.add_parser("check-mesh", help="step-ratio and step-size conditions for a mesh CSV")
    chk.add_argument("--mesh", required=True)
    chk.add_argument("--eps", type=float, default=0.1)
    chk.add_argument("--out")
    return parser


def _emit_json(doc, out):
    if out:
        io.write_json(doc, out)
    else:
        print(io.dumps(doc))


def cmd_converge(args):
    grid = GridSpec(M=args.grid)
    rows = convergence_study(args.kind, args.N, args.seed, grid, MbeParams(args.eps), args.T,
                             spatial_correction=not args.raw_error, n_jobs=args.jobs)
    print(f"{'N':>6} {'tau':>10} {'e(N)':>10} {'order':>6} {'max r':>8} {'N1':>4}")
    for r in rows:
        order = "-" if r.order is None else f"{r.order:.2f}"
        print(f"{r.N:6d} {r.tau_max:10.3e} {r.error:10.3e} {order:>6} {r.max_ratio:8.2f} {r.N1:4d}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_convergence_csv(rows, out / "convergence.csv")
        io.write_json({"kind": args.kind, "N": args.N, "seed": args.seed, "eps": args.eps, "M": args.grid,
                       "L": grid.L, "T": args.T, "spatial_correction": not args.raw_error}, out / "config.json")
    return EXIT_OK


def cmd_simulate(args):
    grid = GridSpec(L=args.L, M=args.grid)
    phi0 = initial_field(args.ic, grid)
    adaptive_cfg = AdaptiveConfig(tol=args.tol, safety=args.safety, tau_min=args.tau_min, tau_max=args.tau_max)
    report = benchmark_run(args.mode, args.eps, grid, args.T, tau=args.tau, adaptive_cfg=adaptive_cfg,
                           tau_init=args.tau_init, snapshots=args.snapshots, phi0=phi0,
                           solver_cfg=SolverConfig(fp_tol=args.fp_tol), strict=args.strict,
                           progress=args.progress)
    report.config["ic"] = args.ic
    summary = {"accepted": report.accepted, "rejected": report.rejected, "E_final": report["E"][-1],
               "roughness_final": report["roughness"][-1]}
    if args.out:
        emit_report(report, args.out, grid)
    print(io.dumps(summary))
    return EXIT_OK


def cmd_kernels(args):
    mesh = io.read_mesh_csv(args.mesh)
    kern = Bdf2Kernels.from_mesh(mesh)
    doc = {"N": mesh.N, "b0": kern.b0, "b1": kern.b1}
    if mesh.N:
        audit = audit_doc_kernels(mesh)
        doc.update(orthogonality_deviation=audit.orthogonality_deviation,
                   row_sum_deviation=audit.row_sum_deviation,
                   recursion_vs_closed_form=audit.recursion_vs_closed_form)
        try:
            doc["m_r"] = compute_m_r(mesh)
        except StabilityError as exc:
            doc["m_r"], doc["m_r_error"] = None, str(exc)
    s1, s2 = check_s1(mesh), check_s2(mesh)
    doc["s1"] = asdict(s1)
    doc["s2"] = {"index_set_R": s2.index_set_R, "N0": s2.N0, "fraction": s2.fraction, "satisfied": s2.satisfied}
    _emit_json(doc, args.out)
    return EXIT_OK


def cmd_check_mesh(args):
    mesh = io.read_mesh_csv(args.mesh)
    s1, s2 = check_s1(mesh), check_s2(mesh)
    doc = {"N": mesh.N, "T": mesh.T, "s1": asdict(s1),
           "s2": {"index_set_R": s2.index_set_R, "N0": s2.N0, "fraction": s2.fraction, "satisfied": s2.satisfied}}
    if mesh.N:
        restriction = check_energy_step_restriction(mesh, args.eps)
        doc["energy_restriction"] = {"satisfied": restriction.satisfied, "violations": restriction.violations}
        doc["tau_le_4eps"] = bool(np.all(mesh.steps <= 4 * args.eps))
    _emit_json(doc, args.out)
    return EXIT_OK


COMMANDS = {"converge": cmd_converge, "simulate": cmd_simulate, "kernels": cmd_kernels, "check-mesh": cmd_check_mesh}


def _load_config(argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    with open(known.config) as fh:
        data = json.load(fh)
    return {k.lstrip("-").replace("-", "_"): v for k, v in data.items()}


def _apply_config(parser, defaults):
    for action in parser._subparsers._group_actions:
        for sub in action.choices.values():
            valid = {a.dest for a in sub._actions}
            values = {}
            for k, v in defaults.items():
                if k not in valid:
                    continue
                if k in ("N",) and not isinstance(v, list):
                    v = _int_list(v)
                elif k == "snapshots" and not isinstance(v, list):
                    v = _float_list(v)
                values[k] = v
            sub.set_defaults(**values)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    try:
        defaults = _load_config(argv)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_INPUT
    _apply_config(parser, defaults)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except FixedPointError as exc:
        where = f" at level {exc.level}" if exc.level is not None else ""
        print(f"solver failure{where}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
