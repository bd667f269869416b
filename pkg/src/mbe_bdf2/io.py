"""CSV/JSON formats for meshes, field snapshots and run time series."""

from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path

import numpy as np

from .grid import GridSpec
from .report import INT_COLUMNS, RunReport
from .time_mesh import TimeMesh

_FLOAT_FMT = "%.17g"


def write_mesh_csv(mesh: TimeMesh, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        if mesh.seed is not None:
            fh.write(f"# seed={mesh.seed}\n")
        fh.write("t\n")
        for t in mesh.levels:
            fh.write(repr(float(t)) + "\n")
    return path


def read_mesh_csv(path) -> TimeMesh:
    seed = None
    levels = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                m = re.search(r"seed=(-?\d+)", line)
                if m:
                    seed = int(m.group(1))
                continue
            if line == "t":
                continue
            levels.append(float(line))
    return TimeMesh(np.array(levels), seed=seed)


def write_field_csv(phi, grid: GridSpec, t: float, path):
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"# L={grid.L!r} M={grid.M} t={float(t)!r}\n")
        np.savetxt(fh, np.asarray(phi), delimiter=",", fmt=_FLOAT_FMT)
    return path


def read_field_csv(path):
    """Return ``(phi, grid, t)`` from a snapshot file."""
    with Path(path).open() as fh:
        header = fh.readline()
        values = dict(re.findall(r"(\w+)=(\S+)", header))
        phi = np.loadtxt(fh, delimiter=",", ndmin=2)
    grid = GridSpec(L=float(values.get("L", 2 * math.pi)), M=int(values.get("M", phi.shape[0])))
    if phi.shape != grid.shape:
        raise ValueError(f"{path}: field shape {phi.shape} does not match header M={grid.M}")
    return phi, grid, float(values.get("t", "nan"))


def _fmt(name, value):
    if name in INT_COLUMNS:
        return str(int(value))
    return repr(float(value))


def write_timeseries_csv(report: RunReport, path):
    path = Path(path)
    names = report.column_names
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in report.rows():
            writer.writerow([_fmt(n, row[n]) for n in names])
    return path


def read_timeseries_csv(path) -> dict:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        names = next(reader)
        cols = {n: [] for n in names}
        for row in reader:
            for n, v in zip(names, row):
                cols[n].append(int(v) if n in INT_COLUMNS else float(v))
    return {n: np.asarray(v, dtype=int if n in INT_COLUMNS else float) for n, v in cols.items()}


class _Encoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        return super().default(o)


def write_json(obj, path):
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, cls=_Encoder, allow_nan=True) + "\n")
    return path


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, cls=_Encoder)
