"""Nonuniform time meshes and the step-ratio conditions used by variable-step BDF2."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

#: Zero-stability limit for the adjacent step ratio, the positive root of x**2 - 3x - 2.
R_S = (3.0 + math.sqrt(17.0)) / 2.0

#: Classical BDF2 zero-stability bound, the lower edge of the index set reported by check_s2.
R_ZS = 1.0 + math.sqrt(2.0)


@dataclass(frozen=True)
class TimeMesh:
    """Strictly increasing time levels ``t_0 < t_1 < ... < t_N``.

    Levels are the single source of truth; steps and ratios are derived on
    demand. Arrays returned by :attr:`steps` and :attr:`ratios` are indexed
    from zero, so ``steps[k - 1]`` is the step ``tau_k`` and ``ratios[k - 1]``
    is ``r_k`` (with ``r_1 = 0``).
    """

    levels: np.ndarray
    seed: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        levels = np.array(self.levels, dtype=float)
        if levels.ndim != 1 or levels.size < 1:
            raise ValueError("time levels must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(levels)):
            raise ValueError("time levels must be finite")
        if levels.size > 1 and not np.all(np.diff(levels) > 0):
            raise ValueError("time levels must be strictly increasing")
        levels.setflags(write=False)
        object.__setattr__(self, "levels", levels)

    @property
    def N(self) -> int:
        return self.levels.size - 1

    @property
    def T(self) -> float:
        return float(self.levels[-1] - self.levels[0])

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.levels)

    @property
    def ratios(self) -> np.ndarray:
        tau = self.steps
        r = np.zeros_like(tau)
        r[1:] = tau[1:] / tau[:-1]
        return r

    @property
    def max_step(self) -> float:
        return float(self.steps.max()) if self.N else 0.0

    def tau(self, k: int) -> float:
        """Step ``tau_k`` for ``1 <= k <= N``."""
        self._check_index(k)
        return float(self.levels[k] - self.levels[k - 1])

    def ratio(self, k: int) -> float:
        """Step ratio ``r_k`` for ``1 <= k <= N`` (``r_1 = 0``)."""
        self._check_index(k)
        if k == 1:
            return 0.0
        return self.tau(k) / self.tau(k - 1)

    def _check_index(self, k):
        if not 1 <= k <= self.N:
            raise IndexError(f"level index {k} outside 1..{self.N}")

    def __len__(self):
        return self.levels.size

    def __eq__(self, other):
        if not isinstance(other, TimeMesh):
            return NotImplemented
        return np.array_equal(self.levels, other.levels)

    def __hash__(self):
        return hash(self.levels.tobytes())


def uniform_mesh(T: float, N: int) -> TimeMesh:
    """``N`` equal steps covering ``[0, T]``."""
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    levels = T * np.arange(N + 1) / N
    levels[-1] = T
    return TimeMesh(levels)


def random_sigmas(N: int, seed: int) -> np.ndarray:
    """The i.i.d. uniform(0, 1) draws behind :func:`random_mesh`."""
    rng = np.random.default_rng(seed)
    sigma = rng.random(N)
    # rng.random samples [0, 1); redraw the (practically impossible) zeros
    while np.any(sigma == 0.0):
        zero = sigma == 0.0
        sigma[zero] = rng.random(int(zero.sum()))
    return sigma


def random_mesh(T: float, N: int, seed: int) -> TimeMesh:
    """Random mesh with steps ``tau_k = T * sigma_k / sum(sigma)``.

    The final level is pinned to ``T`` so the steps sum to ``T`` exactly.
    """
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    sigma = random_sigmas(int(N), seed)
    tau = T * sigma / sigma.sum()
    levels = np.concatenate(([0.0], np.cumsum(tau)))
    levels[-1] = T
    return TimeMesh(levels, seed=seed)


def random_s1_mesh(T: float, N: int, seed: int, r_max: float = 3.5) -> TimeMesh:
    """Random mesh whose step ratios are log-uniform on ``[1/r_max, r_max]``.

    With ``r_max < R_S`` every draw satisfies S1, which makes this the test
    family for properties that only hold under the step-ratio condition.
    """
    if not 1.0 <= r_max:
        raise ValueError(f"r_max must be at least 1, got {r_max}")
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    rng = np.random.default_rng(seed)
    log_r = rng.uniform(-math.log(r_max), math.log(r_max), int(N) - 1)
    log_tau = np.concatenate(([0.0], np.cumsum(log_r)))
    tau = np.exp(log_tau - log_tau.max())
    tau *= T / tau.sum()
    levels = np.concatenate(([0.0], np.cumsum(tau)))
    levels[-1] = T
    return TimeMesh(levels, seed=seed)


@dataclass
class S1Report:
    satisfied: bool
    violations: List[Tuple[int, float]]


@dataclass
class S2Report:
    satisfied: bool
    index_set_R: List[int]
    N0: int
    fraction: float
    s1: S1Report


@dataclass
class StepRestrictionReport:
    satisfied: bool
    violations: List[int]
    bounds: np.ndarray


def check_s1(mesh: TimeMesh) -> S1Report:
    """Report every ``k >= 2`` whose ratio violates ``0 < r_k < R_S``."""
    r = mesh.ratios
    bad = [(k, float(r[k - 1])) for k in range(2, mesh.N + 1) if not 0 < r[k - 1] < R_S]
    return S1Report(satisfied=not bad, violations=bad)


def check_s2(mesh: TimeMesh, max_fraction: float = 0.1) -> S2Report:
    """Collect the levels with ``1 + sqrt(2) <= r_k < R_S``.

    ``satisfied`` is advisory: S1 must hold and ``N0 / N`` must not exceed
    ``max_fraction``.
    """
    s1 = check_s1(mesh)
    r = mesh.ratios
    index_set = [k for k in range(2, mesh.N + 1) if R_ZS <= r[k - 1] < R_S]
    n0 = len(index_set)
    fraction = n0 / mesh.N if mesh.N else 0.0
    return S2Report(
        satisfied=s1.satisfied and fraction <= max_fraction,
        index_set_R=index_set,
        N0=n0,
        fraction=fraction,
        s1=s1,
    )


def energy_step_bounds(mesh: TimeMesh, eps: float) -> np.ndarray:
    """Per-level upper bounds on ``tau_n`` for modified-energy dissipation.

    ``r_{N+1}`` is taken as 0 at the last level.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    r = mesh.ratios
    r_next = np.append(r[1:], 0.0)
    inner = (2.0 + 4.0 * r - r**2) / (1.0 + r) - r_next / (1.0 + r_next)
    return 4.0 * eps * np.minimum(1.0, inner)


def check_energy_step_restriction(mesh: TimeMesh, eps: float) -> StepRestrictionReport:
    bounds = energy_step_bounds(mesh, eps)
    tau = mesh.steps
    bad = [k + 1 for k in np.flatnonzero(tau > bounds)]
    return StepRestrictionReport(satisfied=not bad, violations=bad, bounds=bounds)
