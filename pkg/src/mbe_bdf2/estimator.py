"""scikit-learn style front end.

The estimators treat an initial height field as the input ``X``:
``fit`` runs the solver from ``X`` and keeps the run report, ``transform``
maps each initial field (or a stack of them) to the field at time ``T``.
Hyper-parameters follow the usual ``get_params``/``set_params`` protocol so
the solvers can be cloned and swept like any other estimator.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .adaptive import AdaptiveConfig, run_adaptive
from .grid import GridSpec
from .model import MbeParams
from .stepper import SolverConfig, run_simulation
from .time_mesh import random_mesh, uniform_mesh
from .validation import check_field, check_fields, check_positive


class _BaseMBESolver(TransformerMixin, BaseEstimator):
    def _setup(self, X):
        check_positive(self.eps, "eps")
        check_positive(self.T, "T")
        check_positive(self.length, "length")
        phi0 = check_field(X)
        grid = GridSpec(L=self.length, M=phi0.shape[0])
        solver_cfg = SolverConfig(fp_tol=self.fp_tol, fp_max_iters=self.fp_max_iters, relaxation=self.relaxation)
        return phi0, grid, MbeParams(self.eps), solver_cfg

    def fit(self, X, y=None):
        phi0, grid, params, solver_cfg = self._setup(X)
        self.report_ = self._run(phi0, grid, params, solver_cfg)
        self.grid_ = grid
        self.solution_ = self.report_.final
        self.energy_ = self.report_["E"]
        self.times_ = self.report_["t"]
        self.n_steps_ = self.report_.accepted
        return self

    def transform(self, X):
        check_is_fitted(self, "report_")
        stack = check_fields(X)
        out = []
        for phi0 in stack:
            phi0, grid, params, solver_cfg = self._setup(phi0)
            out.append(self._run(phi0, grid, params, solver_cfg).final)
        out = np.stack(out)
        return out[0] if np.asarray(X).ndim == 2 else out

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y).solution_

    def energy_at(self, t):
        """Discrete energy of the fitted run, linearly interpolated in time."""
        check_is_fitted(self, "report_")
        return np.interp(t, self.times_, self.energy_)


class BDF2MBESolver(_BaseMBESolver):
    """Variable-step BDF2 on a prescribed uniform or random time mesh.

    Parameters
    ----------
    eps : float
        Surface-diffusion coefficient.
    T : float
        Final time.
    n_steps : int
        Number of time steps.
    mesh : {"uniform", "random"}
        Mesh family; random meshes are drawn with ``random_state``.
    length : float
        Side of the periodic square domain.
    """

    def __init__(self, eps=0.1, T=1.0, n_steps=100, mesh="uniform", random_state=0, length=2 * math.pi,
                 fp_tol=1e-12, fp_max_iters=500, relaxation=1.0):
        self.eps = eps
        self.T = T
        self.n_steps = n_steps
        self.mesh = mesh
        self.random_state = random_state
        self.length = length
        self.fp_tol = fp_tol
        self.fp_max_iters = fp_max_iters
        self.relaxation = relaxation

    def _time_mesh(self):
        if self.mesh == "uniform":
            return uniform_mesh(self.T, self.n_steps)
        if self.mesh == "random":
            return random_mesh(self.T, self.n_steps, self.random_state)
        raise ValueError(f"mesh must be 'uniform' or 'random', got {self.mesh!r}")

    def _run(self, phi0, grid, params, solver_cfg):
        self.time_mesh_ = self._time_mesh()
        return run_simulation(phi0, self.time_mesh_, grid, params, solver_cfg)


class AdaptiveBDF2MBESolver(_BaseMBESolver):
    """BDF2 with the BDF1/BDF2 error-indicator step controller."""

    def __init__(self, eps=0.1, T=1.0, tol=1e-3, safety=0.9, tau_min=1e-4, tau_max=0.1, tau_init=None,
                 length=2 * math.pi, fp_tol=1e-12, fp_max_iters=500, relaxation=1.0):
        self.eps = eps
        self.T = T
        self.tol = tol
        self.safety = safety
        self.tau_min = tau_min
        self.tau_max = tau_max
        self.tau_init = tau_init
        self.length = length
        self.fp_tol = fp_tol
        self.fp_max_iters = fp_max_iters
        self.relaxation = relaxation

    def _run(self, phi0, grid, params, solver_cfg):
        cfg = AdaptiveConfig(tol=self.tol, safety=self.safety, tau_min=self.tau_min, tau_max=self.tau_max)
        tau_init = self.tau_min if self.tau_init is None else self.tau_init
        report = run_adaptive(phi0, self.T, tau_init, grid, params, cfg, solver_cfg)
        self.n_rejected_ = report.rejected
        return report
