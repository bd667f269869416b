"""Uniform periodic grid on ``(0, L)^2`` with the central-difference operators
of the scheme, discrete inner products, and an FFT solver for
``alpha * w + eps * Lap_h^2 w = rhs``.

Fields are plain ``(M, M)`` float arrays with row index = y and column
index = x; vector fields are ``(u_x, u_y)`` tuples of such arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    L: float = 2.0 * math.pi
    M: int = 64

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 4 or self.M % 2:
            raise ValueError(f"M must be an even integer >= 4, got {self.M}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return self.L / self.M

    @property
    def shape(self) -> tuple:
        return (self.M, self.M)

    def nodes(self):
        """Node coordinates ``(X, Y)`` with ``X[i, j] = j h`` and ``Y[i, j] = i h``."""
        x = self.h * np.arange(self.M)
        return np.meshgrid(x, x, indexing="xy")

    # stencils -------------------------------------------------------------

    def gradient(self, w):
        h2 = 2.0 * self.h
        wx = (np.roll(w, -1, axis=1) - np.roll(w, 1, axis=1)) / h2
        wy = (np.roll(w, -1, axis=0) - np.roll(w, 1, axis=0)) / h2
        return wx, wy

    def divergence(self, u):
        ux, uy = u
        h2 = 2.0 * self.h
        return (np.roll(ux, -1, axis=1) - np.roll(ux, 1, axis=1)) / h2 + (
            np.roll(uy, -1, axis=0) - np.roll(uy, 1, axis=0)
        ) / h2

    def laplacian(self, w):
        h2 = self.h**2
        return (
            np.roll(w, -1, axis=1) + np.roll(w, 1, axis=1) + np.roll(w, -1, axis=0) + np.roll(w, 1, axis=0) - 4.0 * w
        ) / h2

    def bilaplacian(self, w):
        return self.laplacian(self.laplacian(w))

    # inner products --------------------------------------------------------

    def inner(self, v, w) -> float:
        """``<v, w> = h^2 sum v w``; vector fields are contracted componentwise."""
        if isinstance(v, tuple):
            return sum(self.inner(a, b) for a, b in zip(v, w))
        return float(self.h**2 * np.sum(v * w))

    def norm(self, v) -> float:
        return math.sqrt(max(self.inner(v, v), 0.0))

    def grad_norm(self, v) -> float:
        return self.norm(self.gradient(v))

    def lap_norm(self, v) -> float:
        return self.norm(self.laplacian(v))

    def mean(self, v) -> float:
        return float(np.mean(v))

    # implicit solve --------------------------------------------------------

    @cached_property
    def _lap_symbol(self) -> np.ndarray:
        """Eigenvalues of ``Lap_h`` on the rfft2 mode layout."""
        M, h = self.M, self.h
        ky = np.arange(M)
        kx = np.arange(M // 2 + 1)
        lam_y = -(4.0 / h**2) * np.sin(np.pi * ky / M) ** 2
        lam_x = -(4.0 / h**2) * np.sin(np.pi * kx / M) ** 2
        return lam_y[:, None] + lam_x[None, :]

    def solve_helmholtz_biharmonic(self, alpha: float, eps: float, rhs) -> np.ndarray:
        """Solve ``alpha w + eps Lap_h^2 w = rhs`` exactly by diagonalising ``Lap_h``."""
        if not alpha > 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        if eps < 0:
            raise ValueError(f"eps must be nonnegative, got {eps}")
        if eps == 0:
            return np.asarray(rhs, dtype=float) / alpha
        coef = np.fft.rfft2(rhs)
        coef /= alpha + eps * self._lap_symbol**2
        return np.fft.irfft2(coef, s=self.shape)
