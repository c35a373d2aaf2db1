"""Probe tables (CSV) and field snapshots (legacy VTK point clouds or CSV)."""
from __future__ import annotations

import csv
import os

import numpy as np

FLOAT_FORMAT = "%.17e"  # fixed width, round-trips every double exactly


def _fmt(x) -> str:
    return FLOAT_FORMAT % float(x)


def _open(path, mode="w"):
    try:
        parent = os.path.dirname(os.fspath(path))
        if parent:
            os.makedirs(parent, exist_ok=True)
        return open(path, mode, newline="", encoding="ascii")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_probe_csv(path, header, rows):
    """``header`` starts with ``time``; ``rows`` are sequences of floats."""
    with _open(path) as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_probe_csv(path):
    """Returns ``(header, array)``; values parse back to the exact doubles written."""
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(v) for v in row] for row in reader if row]
    return header, np.array(data, dtype=float).reshape(-1, len(header))


def _pad3(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.shape[1] < 3:
        a = np.hstack([a, np.zeros((len(a), 3 - a.shape[1]))])
    return a


def write_vtk_points(path, positions, scalars=None, vectors=None, title="cardiosph snapshot"):
    """Legacy ASCII VTK POLYDATA with one vertex cell per particle."""
    pos = _pad3(positions)
    n = len(pos)
    with _open(path) as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title.replace("\n", " ")[:255] + "\n")
        fh.write("ASCII\nDATASET POLYDATA\n")
        fh.write(f"POINTS {n} double\n")
        for p in pos:
            fh.write(f"{p[0]:.10e} {p[1]:.10e} {p[2]:.10e}\n")
        fh.write(f"VERTICES {n} {2 * n}\n")
        for i in range(n):
            fh.write(f"1 {i}\n")
        if scalars or vectors:
            fh.write(f"POINT_DATA {n}\n")
        for name, vals in (scalars or {}).items():
            vals = np.asarray(vals, dtype=float).reshape(n)
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            fh.write("\n".join(f"{v:.10e}" for v in vals) + "\n")
        for name, vals in (vectors or {}).items():
            vals = _pad3(vals)
            fh.write(f"VECTORS {name} double\n")
            fh.write("\n".join(f"{v[0]:.10e} {v[1]:.10e} {v[2]:.10e}" for v in vals) + "\n")


def write_snapshot_csv(path, positions, scalars=None, vectors=None):
    pos = np.asarray(positions, dtype=float)
    cols = [pos[:, a] for a in range(pos.shape[1])]
    header = ["x", "y", "z"][: pos.shape[1]]
    for name, vals in (scalars or {}).items():
        cols.append(np.asarray(vals, dtype=float))
        header.append(name)
    for name, vals in (vectors or {}).items():
        vals = np.asarray(vals, dtype=float)
        for a in range(vals.shape[1]):
            cols.append(vals[:, a])
            header.append(f"{name}_{'xyz'[a]}")
    write_probe_csv(path, header, np.column_stack(cols))
