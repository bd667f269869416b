"""BDF2 convolution kernels, their discrete orthogonal convolution (DOC) kernels,
and the matrix quantities that control stability on a given time mesh.

Level indices ``n`` are 1-based throughout the public API, matching the
time-mesh convention ``tau_n = t_n - t_{n-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from .time_mesh import TimeMesh, check_s1


class StabilityError(ArithmeticError):
    """A kernel matrix that must be positive definite is not."""


@dataclass(frozen=True)
class Bdf2Kernels:
    """Per-level coefficients ``b_0^(n)`` and ``b_1^(n)``; ``b0[n - 1]`` is level ``n``."""

    b0: np.ndarray
    b1: np.ndarray

    @property
    def N(self) -> int:
        return self.b0.size

    @classmethod
    def from_mesh(cls, mesh: TimeMesh) -> "Bdf2Kernels":
        tau = mesh.steps
        r = mesh.ratios
        # r_1 = 0 turns the general formula into the BDF1 start (1/tau_1, 0)
        b0 = (1.0 + 2.0 * r) / (tau * (1.0 + r))
        b1 = -(r**2) / (tau * (1.0 + r))
        return cls(b0, b1)


def bdf2_coefficients(mesh: TimeMesh, n: int) -> tuple:
    """Return ``(b_0^(n), b_1^(n))`` for ``1 <= n <= N``."""
    tau = mesh.tau(n)
    if n == 1:
        return 1.0 / tau, 0.0
    r = mesh.ratio(n)
    return (1.0 + 2.0 * r) / (tau * (1.0 + r)), -(r**2) / (tau * (1.0 + r))


def coefficients_from_steps(tau: float, tau_prev: Optional[float]) -> tuple:
    """Kernel pair for a step ``tau`` following ``tau_prev`` (``None`` gives BDF1)."""
    if tau_prev is None:
        return 1.0 / tau, 0.0
    r = tau / tau_prev
    return (1.0 + 2.0 * r) / (tau * (1.0 + r)), -(r**2) / (tau * (1.0 + r))


def apply_d2(kernels: Bdf2Kernels, history: Sequence, n: Optional[int] = None):
    """Evaluate ``D_2 v^n = b_0^(n) (v^n - v^{n-1}) + b_1^(n) (v^{n-1} - v^{n-2})``.

    ``history`` holds ``v^0, ..., v^m``; ``n`` defaults to ``m``. Entries may be
    scalars or arrays of a common shape.
    """
    if n is None:
        n = len(history) - 1
    if n < 1 or n > kernels.N:
        raise IndexError(f"level index {n} outside 1..{kernels.N}")
    if len(history) < n + 1:
        raise ValueError(f"need {n + 1} history entries, got {len(history)}")
    out = kernels.b0[n - 1] * (np.asarray(history[n]) - np.asarray(history[n - 1]))
    if n >= 2:
        out = out + kernels.b1[n - 1] * (np.asarray(history[n - 1]) - np.asarray(history[n - 2]))
    return out


@dataclass(frozen=True)
class DocKernelTable:
    """Dense lower-triangular table with ``theta[n - 1, k - 1] = theta_{n-k}^(n)``."""

    theta: np.ndarray

    @property
    def N(self) -> int:
        return self.theta.shape[0]

    def entry(self, n: int, k: int) -> float:
        if not 1 <= k <= n <= self.N:
            raise IndexError(f"DOC entry ({n}, {k}) outside 1 <= k <= n <= {self.N}")
        return float(self.theta[n - 1, k - 1])

    def row_sums(self) -> np.ndarray:
        return self.theta.sum(axis=1)

    def convolve(self, values: np.ndarray) -> np.ndarray:
        """``sum_j theta_{k-j}^(k) values[j - 1]`` for every ``k``; values may carry trailing axes."""
        values = np.asarray(values, dtype=float)
        return np.tensordot(self.theta, values, axes=(1, 0))


def doc_table_recursive(mesh: TimeMesh) -> DocKernelTable:
    """DOC kernels from the defining recursion.

    Since only ``b_0`` and ``b_1`` are nonzero the recursion collapses to
    ``theta[n, k] = -theta[n, k + 1] * b_1^(k + 1) / b_0^(k)``, applied
    column by column for all rows at once.
    """
    kern = Bdf2Kernels.from_mesh(mesh)
    N = mesh.N
    theta = np.zeros((N, N))
    theta[np.arange(N), np.arange(N)] = 1.0 / kern.b0
    for k in range(N - 2, -1, -1):
        theta[k + 1 :, k] = -theta[k + 1 :, k + 1] * kern.b1[k + 1] / kern.b0[k]
    return DocKernelTable(theta)


def doc_table_closed_form(mesh: TimeMesh) -> DocKernelTable:
    """DOC kernels from the product formula ``(1 / b_0^(j)) prod_{i=j+1}^n r_i^2 / (1 + 2 r_i)``."""
    kern = Bdf2Kernels.from_mesh(mesh)
    r = mesh.ratios
    q = r**2 / (1.0 + 2.0 * r)
    N = mesh.N
    theta = np.zeros((N, N))
    for j in range(N):
        theta[j, j] = 1.0
        theta[j + 1 :, j] = np.cumprod(q[j + 1 :])
        theta[j:, j] /= kern.b0[j]
    return DocKernelTable(theta)


def verify_orthogonality(b: Bdf2Kernels, theta: DocKernelTable) -> float:
    """Max deviation of ``sum_{j=k}^n theta_{n-j}^(n) b_{j-k}^(j)`` from the Kronecker delta."""
    if b.N != theta.N:
        raise ValueError("kernels and DOC table belong to meshes of different size")
    th = theta.theta
    prod = th * b.b0[None, :]
    prod[:, :-1] += th[:, 1:] * b.b1[None, 1:]
    prod = np.tril(prod)
    return float(np.abs(prod - np.eye(b.N)).max()) if b.N else 0.0


@dataclass
class QuadraticFormCheck:
    lhs: float
    rhs: float
    holds: bool
    pointwise_holds: bool


def quadratic_form_lower_bound_check(mesh: TimeMesh, w: Sequence[float]) -> QuadraticFormCheck:
    """Evaluate both sides of the BDF2 kernel positive-definiteness bound.

    ``lhs = sum_k w_k sum_j b_{k-j}^(k) w_j`` and
    ``rhs = 1/2 sum_k [(2 + 4 r_k - r_k^2)/(1 + r_k) - r_{k+1}/(1 + r_{k+1})] w_k^2 / tau_k``
    with ``r_{N+1} = 0``. The per-level telescoping inequality is checked too.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (mesh.N,):
        raise ValueError(f"w must have length {mesh.N}")
    kern = Bdf2Kernels.from_mesh(mesh)
    tau = mesh.steps
    r = mesh.ratios
    r_next = np.append(r[1:], 0.0)
    w_prev = np.concatenate(([0.0], w[:-1]))
    conv = kern.b0 * w + kern.b1 * w_prev
    lhs = float(np.dot(w, conv))
    coeff = (2.0 + 4.0 * r - r**2) / (1.0 + r) - r_next / (1.0 + r_next)
    rhs = float(0.5 * np.sum(coeff * w**2 / tau))
    scale = float(np.sum(np.abs(w) * (np.abs(kern.b0 * w) + np.abs(kern.b1 * w_prev)))) or 1.0

    tau_prev = np.concatenate(([1.0], tau[:-1]))
    local_rhs = (
        r_next / (1.0 + r_next) * w**2 / tau
        - r / (1.0 + r) * w_prev**2 / tau_prev
        + coeff * w**2 / tau
    )
    local_lhs = 2.0 * w * conv
    local_scale = np.abs(local_lhs) + np.abs(local_rhs) + 1e-300
    pointwise = bool(np.all(local_lhs >= local_rhs - 1e-12 * local_scale))
    return QuadraticFormCheck(lhs=lhs, rhs=rhs, holds=lhs >= rhs - 1e-12 * scale, pointwise_holds=pointwise)


@dataclass(frozen=True)
class KernelMatrices:
    """Scalar (tensor-factor free) kernel matrices for the leading ``n`` levels."""

    B2: np.ndarray
    Theta2: np.ndarray
    B: np.ndarray
    Btilde2: np.ndarray
    Btilde: np.ndarray


def scaled_kernels(mesh: TimeMesh) -> tuple:
    """Diagonal and sub-diagonal of ``Btilde2 = Lambda B2 Lambda``.

    Returns ``(d, s)`` with ``d[k - 1] = (1 + 2 r_k)/(1 + r_k)`` and
    ``s[k - 1] = -r_k^{3/2}/(1 + r_k)`` (``s[0]`` is unused and zero).
    """
    r = mesh.ratios
    return (1.0 + 2.0 * r) / (1.0 + r), -(r**1.5) / (1.0 + r)


def kernel_matrices(mesh: TimeMesh, n: Optional[int] = None) -> KernelMatrices:
    n = mesh.N if n is None else n
    kern = Bdf2Kernels.from_mesh(mesh)
    B2 = np.diag(kern.b0[:n]) + np.diag(kern.b1[1:n], -1)
    Theta2 = doc_table_recursive(mesh).theta[:n, :n]
    d, s = scaled_kernels(mesh)
    Bt2 = np.diag(d[:n]) + np.diag(s[1:n], -1)
    return KernelMatrices(B2=B2, Theta2=Theta2, B=B2 + B2.T, Btilde2=Bt2, Btilde=Bt2 + Bt2.T)


def tridiagonal_eigenvalues(diag, offdiag, which: str = "all") -> np.ndarray:
    """Eigenvalues of a symmetric tridiagonal matrix (ascending).

    ``which`` is ``"all"``, ``"min"`` or ``"max"``.
    """
    diag = np.asarray(diag, dtype=float)
    offdiag = np.asarray(offdiag, dtype=float)
    n = diag.size
    if n == 1:
        return diag.copy()
    if which == "all":
        return eigvalsh_tridiagonal(diag, offdiag)
    idx = 0 if which == "min" else n - 1
    return eigvalsh_tridiagonal(diag, offdiag, select="i", select_range=(idx, idx))


def m_r_levels(mesh: TimeMesh, levels: Optional[Sequence[int]] = None) -> np.ndarray:
    """Ratio ``lambda_max(Bt2^T Bt2) / lambda_min(Bt)^2`` for each leading size ``n``."""
    d, s = scaled_kernels(mesh)
    if levels is None:
        levels = range(1, mesh.N + 1)
    out = []
    for n in levels:
        dn = d[:n]
        sn = s[1:n]
        lam_min = tridiagonal_eigenvalues(2.0 * dn, sn, "min")[0]
        if not lam_min > 0:
            raise StabilityError(f"Btilde is not positive definite at n={n} (lambda_min={lam_min:.3e})")
        # Bt2^T Bt2 for lower bidiagonal Bt2 is tridiagonal
        gram_diag = dn**2
        gram_diag[:-1] += sn**2
        gram_off = sn * dn[1:]
        lam_max = tridiagonal_eigenvalues(gram_diag, gram_off, "max")[0]
        out.append(lam_max / lam_min**2)
    return np.asarray(out)


def compute_m_r(mesh: TimeMesh, levels: Optional[Sequence[int]] = None) -> float:
    """Stability quantity ``M_r``: the max over ``n`` of :func:`m_r_levels`.

    Pass ``levels`` to restrict the maximum to checkpoint sizes on long meshes.
    """
    if mesh.N < 1:
        raise ValueError("M_r needs at least one time step")
    return float(m_r_levels(mesh, levels).max())


@dataclass
class KernelAudit:
    orthogonality_deviation: float
    row_sum_deviation: float
    recursion_vs_closed_form: float
    min_theta: float
    s1_satisfied: bool


def audit_doc_kernels(mesh: TimeMesh) -> KernelAudit:
    """Orthogonality, row-sum and positivity diagnostics for the DOC table."""
    kern = Bdf2Kernels.from_mesh(mesh)
    rec = doc_table_recursive(mesh)
    closed = doc_table_closed_form(mesh)
    tril = np.tril_indices(mesh.N)
    a, c = rec.theta[tril], closed.theta[tril]
    rel = np.abs(a - c) / np.maximum(np.abs(c), np.finfo(float).tiny)
    rel[(a == 0) & (c == 0)] = 0.0
    row_dev = np.abs(rec.row_sums() - mesh.steps) / mesh.steps
    return KernelAudit(
        orthogonality_deviation=verify_orthogonality(kern, rec),
        row_sum_deviation=float(row_dev.max()),
        recursion_vs_closed_form=float(rel.max()),
        min_theta=float(a.min()),
        s1_satisfied=check_s1(mesh).satisfied,
    )
