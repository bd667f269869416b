"""Run reports: per-level time series plus snapshots, configuration echo and mesh audit."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

BASE_COLUMNS = ("step", "t", "tau", "ratio", "E", "E_modified", "roughness", "mean", "fp_iters", "fp_residual")
ADAPTIVE_COLUMNS = ("e_indicator", "accepted", "retries")
INT_COLUMNS = {"step", "fp_iters", "accepted", "retries"}


@dataclass
class RunReport:
    mode: str = "uniform"
    columns: Dict[str, list] = field(default_factory=dict)
    snapshots: Dict[float, np.ndarray] = field(default_factory=dict)
    snapshot_times: Dict[float, float] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)
    final: Optional[np.ndarray] = None
    accepted: int = 0
    rejected: int = 0
    flags: List[str] = field(default_factory=list)

    def __post_init__(self):
        names = BASE_COLUMNS + (ADAPTIVE_COLUMNS if self.mode == "adaptive" else ())
        for name in names:
            self.columns.setdefault(name, [])
        self._dphi_sq: List[float] = []

    @property
    def column_names(self):
        return list(self.columns)

    def __len__(self):
        return len(self.columns["t"])

    def __getitem__(self, name) -> np.ndarray:
        dtype = int if name in INT_COLUMNS else float
        return np.asarray(self.columns[name], dtype=dtype)

    def append(self, *, dphi_sq: float = 0.0, **row):
        """Add one level. ``dphi_sq`` is ``||phi^n - phi^{n-1}||^2``, kept to
        finish the previous level's modified energy once ``r_{n+1}`` is known."""
        if len(self) and row["t"] <= self.columns["t"][-1]:
            raise ValueError("report rows must be strictly increasing in t")
        ratio = row.get("ratio", 0.0)
        if len(self) and ratio > 0:
            prev_tau = self.columns["tau"][-1]
            if prev_tau > 0:
                extra = ratio / (2.0 * (1.0 + ratio) * prev_tau) * self._dphi_sq[-1]
                self.columns["E_modified"][-1] = self.columns["E"][-1] + extra
        row.setdefault("E_modified", row["E"])
        for name in self.columns:
            self.columns[name].append(row.get(name, 0 if name in INT_COLUMNS else float("nan")))
        self._dphi_sq.append(dphi_sq)

    def rows(self):
        names = self.column_names
        for values in zip(*(self.columns[n] for n in names)):
            yield dict(zip(names, values))
