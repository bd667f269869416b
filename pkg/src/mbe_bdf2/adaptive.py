"""Adaptive step control: compare a BDF1 and a BDF2 solve over the same step
and grow or shrink the step from their relative difference."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .grid import GridSpec
from .model import MbeParams
from .report import RunReport
from .stepper import (
    SimState,
    SolverConfig,
    StepConditionError,
    StepInfo,
    StepSizeWarning,
    bdf1_step,
    bdf2_step,
    record_level,
)
from .time_mesh import R_S, TimeMesh

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdaptiveConfig:
    tol: float = 1e-3
    safety: float = 0.9
    tau_min: float = 1e-4
    tau_max: float = 0.1
    ratio_cap: float = R_S
    max_rejections: int = 50

    def __post_init__(self):
        if not 0 < self.tau_min <= self.tau_max:
            raise ValueError(f"need 0 < tau_min <= tau_max, got {self.tau_min}, {self.tau_max}")
        if not 0 < self.safety <= 1:
            raise ValueError(f"safety must lie in (0, 1], got {self.safety}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")

    def clamp(self, tau: float) -> float:
        return min(max(self.tau_min, tau), self.tau_max)


def tau_ada(e: float, tau_cur: float, cfg: AdaptiveConfig = AdaptiveConfig()) -> float:
    """``min(S_a sqrt(tol / e) tau_cur, r_cap tau_cur)``; unclamped."""
    if not tau_cur > 0:
        raise ValueError(f"tau_cur must be positive, got {tau_cur}")
    if e < 0:
        raise ValueError(f"error indicator must be nonnegative, got {e}")
    capped = cfg.ratio_cap * tau_cur
    if e == 0:
        return capped
    return min(cfg.safety * math.sqrt(cfg.tol / e) * tau_cur, capped)


@dataclass
class AdaptiveStepResult:
    phi: np.ndarray
    tau_used: float
    tau_next: float
    retries: int
    e: float
    info: StepInfo
    truncated: bool = False
    flagged: bool = False


def error_indicator(phi2, phi1, grid: GridSpec) -> float:
    """``||phi2 - phi1|| / ||phi2||``, falling back to the absolute difference near zero."""
    denom = grid.norm(phi2)
    diff = grid.norm(phi2 - phi1)
    return diff / denom if denom >= 1e-14 else diff


def adaptive_step(state: SimState, tau: float, grid: GridSpec, params: MbeParams,
                  cfg: AdaptiveConfig = AdaptiveConfig(), solver_cfg: SolverConfig = SolverConfig(),
                  forcing: Optional[Callable[[float], np.ndarray]] = None,
                  t_stop: Optional[float] = None) -> AdaptiveStepResult:
    """Take one accepted step from ``state`` (which must hold two levels).

    A trial is accepted when the indicator is below ``tol`` or the step is
    already at ``tau_min``; otherwise the step is shrunk and recomputed.
    A trial reaching past ``t_stop`` is truncated to land on it exactly.
    """
    retries = 0
    guess1 = guess2 = None
    while True:
        tau_try = tau
        truncated = False
        if t_stop is not None and state.t + tau_try >= t_stop - 1e-12 * max(1.0, abs(t_stop)):
            tau_try = t_stop - state.t
            truncated = True
        g = forcing(state.t + tau_try) if forcing is not None else None
        phi1, info1 = bdf1_step(state.phi, tau_try, grid, params, solver_cfg, g=g,
                                initial=guess1, full_output=True, check=False)
        phi2, info2 = bdf2_step(state, tau_try, grid, params, solver_cfg, g=g,
                                initial=guess2, full_output=True, check=False)
        e = error_indicator(phi2, phi1, grid)
        if e < cfg.tol or tau_try <= cfg.tau_min:
            tau_next = cfg.clamp(tau_ada(e, tau_try, cfg)) if e < cfg.tol else cfg.tau_min
            return AdaptiveStepResult(phi2, tau_try, tau_next, retries, e, info2, truncated=truncated)
        retries += 1
        if retries > cfg.max_rejections:
            warnings.warn(f"accepting step at t={state.t:.6g} after {retries - 1} rejections (e={e:.3e})",
                          StepSizeWarning, stacklevel=2)
            return AdaptiveStepResult(phi2, tau_try, cfg.tau_min, retries - 1, e, info2,
                                      truncated=truncated, flagged=True)
        tau = cfg.clamp(tau_ada(e, tau_try, cfg))
        guess1, guess2 = phi1, phi2


def run_adaptive(phi0, T: float, tau_init: float, grid: GridSpec, params: MbeParams,
                 cfg: AdaptiveConfig = AdaptiveConfig(), solver_cfg: SolverConfig = SolverConfig(),
                 forcing: Optional[Callable[[float], np.ndarray]] = None, observers=(),
                 strict: bool = False) -> RunReport:
    """March to ``T`` with the adaptive controller.

    Level 1 is a plain BDF1 step of size ``tau_init``; the controller runs
    from level 2 on. The last step is truncated to land on ``T``.
    """
    if not cfg.tau_min <= tau_init <= cfg.tau_max:
        raise ValueError(f"tau_init={tau_init} outside [{cfg.tau_min}, {cfg.tau_max}]")
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    if strict and tau_init > 4.0 * params.eps:
        raise StepConditionError(f"tau_init={tau_init} exceeds 4*eps")
    phi0 = np.array(phi0, dtype=float)
    if phi0.shape != grid.shape:
        raise ValueError(f"initial field has shape {phi0.shape}, grid expects {grid.shape}")

    report = RunReport(mode="adaptive")
    state = SimState(phi=phi0)
    record_level(report, state, grid, params, e_indicator=float("nan"), accepted=1, retries=0)
    for obs in observers:
        obs(state, report)

    tau1 = min(tau_init, T)
    g = forcing(tau1) if forcing is not None else None
    phi, info = bdf1_step(state.phi, tau1, grid, params, solver_cfg, g=g, full_output=True, check=False)
    state.advance(phi, tau1, info)
    record_level(report, state, grid, params, info, e_indicator=float("nan"), accepted=1, retries=0)
    for obs in observers:
        obs(state, report)

    tau = tau_init
    while state.t < T - 1e-12 * max(1.0, T):
        res = adaptive_step(state, tau, grid, params, cfg, solver_cfg, forcing, t_stop=T)
        if strict and res.tau_used > 4.0 * params.eps:
            raise StepConditionError(f"accepted step {res.tau_used} exceeds 4*eps at t={state.t:.6g}")
        state.advance(res.phi, res.tau_used, res.info)
        if res.truncated:
            state.t = T
            report.audit["final_step_truncated"] = True
            report.audit["final_step_below_tau_min"] = bool(res.tau_used < cfg.tau_min)
        report.rejected += res.retries
        if res.flagged:
            report.flags.append(f"forced acceptance at level {state.n}")
        record_level(report, state, grid, params, res.info, e_indicator=res.e, accepted=1, retries=res.retries)
        for obs in observers:
            obs(state, report)
        tau = res.tau_next
    report.final = state.phi
    report.accepted = state.n
    return report


def accepted_ratios(report: RunReport) -> np.ndarray:
    """Step ratios of accepted levels, excluding the final truncated step."""
    r = report["ratio"][2:]
    if report.audit.get("final_step_truncated"):
        r = r[:-1]
    return r


def report_mesh(report: RunReport) -> TimeMesh:
    """The accepted time levels of a run as a mesh."""
    return TimeMesh(report["t"])
