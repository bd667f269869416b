"""Fully implicit variable-step BDF2 for the MBE model.

Each level solves

    b0 (phi - phi^{n-1}) + b1 (phi^{n-1} - phi^{n-2}) + eps Lap_h^2 phi + div_h f(grad_h phi) = g

by Picard iteration: the nonlinear term is lagged and the remaining linear
operator ``b0 I + eps Lap_h^2`` is inverted exactly with FFTs.
"""

from __future__ import annotations

import logging
import sys
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional

import numpy as np

from .grid import GridSpec
from .kernels import coefficients_from_steps
from .model import MbeParams, discrete_energy, nonlinear_term, roughness
from .report import RunReport
from .time_mesh import TimeMesh, check_energy_step_restriction, check_s1

logger = logging.getLogger(__name__)


class FixedPointError(RuntimeError):
    """Picard iteration failed to converge; carries the change history."""

    def __init__(self, message, history=(), level=None):
        super().__init__(message)
        self.history = list(history)
        self.level = level


class StepSizeWarning(UserWarning):
    pass


class StepConditionError(ValueError):
    """A theory-grade step condition failed in strict mode."""


@dataclass(frozen=True)
class SolverConfig:
    fp_tol: float = 1e-12
    fp_max_iters: int = 500
    relaxation: float = 1.0

    def __post_init__(self):
        if not self.fp_tol > 0:
            raise ValueError(f"fp_tol must be positive, got {self.fp_tol}")
        if self.fp_max_iters < 1:
            raise ValueError(f"fp_max_iters must be >= 1, got {self.fp_max_iters}")
        if not 0 < self.relaxation <= 1:
            raise ValueError(f"relaxation must lie in (0, 1], got {self.relaxation}")


@dataclass
class StepInfo:
    iterations: int
    change: float
    residual: float
    history: List[float]


@dataclass
class SimState:
    """Two-level history: ``phi`` at level ``n`` and ``phi_prev`` at ``n - 1``."""

    phi: np.ndarray
    phi_prev: Optional[np.ndarray] = None
    n: int = 0
    t: float = 0.0
    tau: float = 0.0
    ratio: float = 0.0
    iterations: List[int] = field(default_factory=list)
    residuals: List[float] = field(default_factory=list)

    def advance(self, phi_new, tau, info: Optional[StepInfo] = None):
        ratio = tau / self.tau if self.n >= 1 else 0.0
        self.phi_prev, self.phi = self.phi, phi_new
        self.n += 1
        self.t += tau
        self.tau, self.ratio = tau, ratio
        if info is not None:
            self.iterations.append(info.iterations)
            self.residuals.append(info.residual)


def implicit_operator(phi, alpha, grid: GridSpec, params: MbeParams):
    """``alpha phi + eps Lap_h^2 phi + div_h f(grad_h phi)``."""
    return alpha * phi + params.eps * grid.bilaplacian(phi) + nonlinear_term(phi, grid)


def solve_implicit(alpha, rhs, grid: GridSpec, params: MbeParams, cfg: SolverConfig, initial):
    """Picard iteration for ``implicit_operator(phi, alpha) = rhs``."""
    phi = np.array(initial, dtype=float)
    history = []
    omega = cfg.relaxation
    for s in range(1, cfg.fp_max_iters + 1):
        new = grid.solve_helmholtz_biharmonic(alpha, params.eps, rhs - nonlinear_term(phi, grid))
        if omega != 1.0:
            new = (1.0 - omega) * phi + omega * new
        change = grid.norm(new - phi) / max(1.0, grid.norm(new))
        history.append(change)
        phi = new
        if not np.isfinite(change):
            break
        if change < cfg.fp_tol:
            residual = grid.norm(implicit_operator(phi, alpha, grid, params) - rhs)
            scale = grid.norm(rhs)
            rel = residual / scale if scale > 0 else residual
            # small changes can still leave a residual above the plug-back contract on large steps
            if rel < 10.0 * cfg.fp_tol or s == cfg.fp_max_iters:
                return phi, StepInfo(iterations=s, change=change, residual=rel, history=history)
    raise FixedPointError(
        f"fixed-point iteration did not converge in {len(history)} iterations "
        f"(last change {history[-1]:.3e}); try a smaller time step",
        history,
    )


def _warn_step(tau, tau_prev, params):
    if tau > 4.0 * params.eps:
        warnings.warn(f"tau={tau:.4g} exceeds 4*eps={4 * params.eps:.4g}; unique solvability not guaranteed",
                      StepSizeWarning, stacklevel=3)
    if tau_prev is not None:
        r = tau / tau_prev
        bound = 4.0 * params.eps * min(1.0, (2.0 + 4.0 * r - r * r) / (1.0 + r))
        if tau > bound:
            warnings.warn(f"tau={tau:.4g} exceeds the energy-dissipation bound {bound:.4g}",
                          StepSizeWarning, stacklevel=3)


def bdf1_step(phi, tau, grid: GridSpec, params: MbeParams, cfg: SolverConfig = SolverConfig(),
              g=None, initial=None, full_output=False, check=True):
    """One backward Euler step from ``phi`` with step ``tau``; ``g`` is the forcing at the new time."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if check:
        _warn_step(tau, None, params)
    alpha = 1.0 / tau
    rhs = alpha * phi if g is None else alpha * phi + g
    phi_new, info = solve_implicit(alpha, rhs, grid, params, cfg, phi if initial is None else initial)
    return (phi_new, info) if full_output else phi_new


def bdf2_step(state: SimState, tau, grid: GridSpec, params: MbeParams, cfg: SolverConfig = SolverConfig(),
              g=None, initial=None, full_output=False, check=True):
    """One variable-step BDF2 step from a state holding two levels."""
    if state.phi_prev is None or state.n < 1:
        raise ValueError("BDF2 needs two history levels; start with bdf1_step")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if check:
        _warn_step(tau, state.tau, params)
    b0, b1 = coefficients_from_steps(tau, state.tau)
    diff_prev = state.phi - state.phi_prev
    rhs = b0 * state.phi - b1 * diff_prev
    if g is not None:
        rhs = rhs + g
    if initial is None:
        initial = state.phi + (tau / state.tau) * diff_prev
    phi_new, info = solve_implicit(b0, rhs, grid, params, cfg, initial)
    return (phi_new, info) if full_output else phi_new


# observers -------------------------------------------------------------------


class SnapshotRecorder:
    """Keep the field at the first level reaching each requested time.

    The level actually used is recorded in ``report.snapshot_times``.
    """

    def __init__(self, times: Iterable[float], atol: float = 1e-9):
        self.pending = sorted(float(t) for t in times)
        self.atol = atol

    def __call__(self, state: SimState, report: RunReport):
        while self.pending and state.t >= self.pending[0] - self.atol:
            requested = self.pending.pop(0)
            report.snapshots[requested] = state.phi.copy()
            report.snapshot_times[requested] = state.t


class ProgressPrinter:
    def __init__(self, every: int = 100, stream=None):
        self.every = every
        self.stream = stream or sys.stderr

    def __call__(self, state: SimState, report: RunReport):
        if state.n % self.every == 0:
            E = report.columns["E"][-1]
            print(f"step {state.n:6d}  t={state.t:.6g}  tau={state.tau:.3e}  E={E:.10g}", file=self.stream)


def record_level(report: RunReport, state: SimState, grid: GridSpec, params: MbeParams,
                 info: Optional[StepInfo] = None, **extra):
    dphi_sq = grid.norm(state.phi - state.phi_prev) ** 2 if state.phi_prev is not None else 0.0
    report.append(
        step=state.n,
        t=state.t,
        tau=state.tau,
        ratio=state.ratio,
        E=discrete_energy(state.phi, grid, params),
        roughness=roughness(state.phi, grid),
        mean=float(np.mean(state.phi)),
        fp_iters=info.iterations if info else 0,
        fp_residual=info.residual if info else 0.0,
        dphi_sq=dphi_sq,
        **extra,
    )


def mesh_step_conditions(mesh: TimeMesh, params: MbeParams) -> dict:
    s1 = check_s1(mesh)
    restriction = check_energy_step_restriction(mesh, params.eps)
    solvable = bool(np.all(mesh.steps <= 4.0 * params.eps)) if mesh.N else True
    return {
        "s1": s1.satisfied,
        "s1_violations": len(s1.violations),
        "energy_restriction": restriction.satisfied,
        "energy_restriction_violations": len(restriction.violations),
        "tau_le_4eps": solvable,
    }


def run_simulation(phi0, mesh: TimeMesh, grid: GridSpec, params: MbeParams, cfg: SolverConfig = SolverConfig(),
                   forcing: Optional[Callable[[float], np.ndarray]] = None, observers=(),
                   strict: bool = False) -> RunReport:
    """March ``phi0`` over ``mesh``: BDF1 for level 1, BDF2 afterwards.

    ``forcing(t)`` returns the source field at time ``t``. Step-condition
    violations only warn unless ``strict`` is set.
    """
    phi0 = np.array(phi0, dtype=float)
    if phi0.shape != grid.shape:
        raise ValueError(f"initial field has shape {phi0.shape}, grid expects {grid.shape}")
    conditions = mesh_step_conditions(mesh, params)
    if strict and not all(conditions[k] for k in ("s1", "energy_restriction", "tau_le_4eps")):
        raise StepConditionError(f"mesh violates step conditions: {conditions}")
    if not all(conditions[k] for k in ("s1", "energy_restriction", "tau_le_4eps")):
        warnings.warn(f"mesh step conditions not all met: {conditions}", StepSizeWarning, stacklevel=2)

    report = RunReport(mode="uniform")
    report.audit.update(conditions)
    state = SimState(phi=phi0, t=float(mesh.levels[0]))
    record_level(report, state, grid, params)
    for obs in observers:
        obs(state, report)

    levels = mesh.levels
    for n in range(1, mesh.N + 1):
        tau = float(levels[n] - levels[n - 1])
        g = forcing(float(levels[n])) if forcing is not None else None
        try:
            if n == 1:
                phi, info = bdf1_step(state.phi, tau, grid, params, cfg, g=g, full_output=True, check=False)
            else:
                phi, info = bdf2_step(state, tau, grid, params, cfg, g=g, full_output=True, check=False)
        except FixedPointError as exc:
            exc.level = n
            raise
        state.advance(phi, tau, info)
        state.t = float(levels[n])
        record_level(report, state, grid, params, info)
        for obs in observers:
            obs(state, report)
    report.final = state.phi
    report.accepted = mesh.N
    return report
