"""CSV / JSON readers and writers for trajectories, policies and reports.

Floats are written with ``repr`` so every file round-trips bit-for-bit.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .dynamics import Trajectory
from .policy import PolicyGrid, SGrid


class DataFileError(ValueError):
    pass


def _fmt(v) -> str:
    return repr(float(v))


def write_table(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Read a numeric CSV with a header row; errors name the offending row and column."""
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataFileError(f"{path}: cannot open ({exc.strerror})") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFileError(f"{path}: empty file") from None
        data = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataFileError(f"{path}: row {lineno} has {len(row)} fields, "
                                    f"expected {len(header)}")
            vals = []
            for col, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataFileError(f"{path}: row {lineno}, column {col!r}: "
                                        f"not a number: {cell!r}") from None
                if not math.isfinite(v):
                    raise DataFileError(f"{path}: row {lineno}, column {col!r}: non-finite value")
                vals.append(v)
            data.append(vals)
    arr = np.array(data, dtype=float).reshape(len(data), len(header))
    return header, arr


def state_header(num_nodes: int, state_dim: int) -> list[str]:
    return [f"x{i}_{c}" for i in range(1, num_nodes + 1) for c in range(1, state_dim + 1)]


def save_trajectory(path, traj: Trajectory, num_nodes: int, state_dim: int) -> None:
    header = ["t"] + state_header(num_nodes, state_dim)
    rows = np.column_stack([traj.times, traj.states])
    write_table(path, header, rows)


def load_trajectory(path, num_nodes: int, state_dim: int, dt: float | None = None) -> Trajectory:
    """Load a trajectory CSV and check its layout against the expected ensemble size.

    When ``dt`` is given the time column must match ``t0 + n*dt`` to 1e-9.
    """
    header, arr = read_table(path)
    expected = ["t"] + state_header(num_nodes, state_dim)
    if header != expected:
        raise DataFileError(f"{path}: header does not match a {num_nodes}-agent, "
                            f"{state_dim}-D trajectory")
    if arr.shape[0] == 0:
        raise DataFileError(f"{path}: no data rows")
    t = arr[:, 0]
    if dt is None:
        if len(t) < 2:
            raise DataFileError(f"{path}: cannot infer dt from a single row")
        dt = float(t[1] - t[0])
    expected_t = t[0] + dt * np.arange(len(t))
    bad = np.flatnonzero(np.abs(t - expected_t) > 1e-9 * max(1.0, abs(t[-1])))
    if bad.size:
        raise DataFileError(f"{path}: row {bad[0] + 2}, column 't': time {t[bad[0]]!r} "
                            f"off the uniform grid with dt={dt}")
    return Trajectory(float(t[0]), float(dt), arr[:, 1:])


def save_policy(path, p: PolicyGrid) -> None:
    write_table(path, ["s", "u"], np.column_stack([p.grid.nodes, p.values]))


def load_policy(path, grid: SGrid | None = None) -> PolicyGrid:
    """Load an ``s,u`` CSV. With ``grid`` given, the policy is resampled onto it."""
    header, arr = read_table(path)
    if header != ["s", "u"]:
        raise DataFileError(f"{path}: expected header 's,u', got {','.join(header)}")
    if arr.shape[0] < 2:
        raise DataFileError(f"{path}: need at least two policy nodes")
    s, u = arr[:, 0], arr[:, 1]
    if np.any(np.diff(s) <= 0):
        raise DataFileError(f"{path}: s column must be strictly increasing")
    if grid is None:
        grid = SGrid(float(s[0]), float(s[-1]), len(s))
        if np.max(np.abs(grid.nodes - s)) > 1e-9 * max(1.0, grid.Delta):
            raise DataFileError(f"{path}: s nodes are not uniformly spaced")
        return PolicyGrid(grid, u)
    if len(s) == grid.num_points and np.array_equal(s, grid.nodes):
        return PolicyGrid(grid, u)
    return PolicyGrid(grid, np.interp(grid.nodes, s, u))


def save_series(path, times: np.ndarray, values: np.ndarray, names: list[str]) -> None:
    values = np.asarray(values).reshape(len(times), -1)
    write_table(path, ["t"] + names, np.column_stack([times, values]))


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, allow_nan=False)
        fh.write("\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataFileError(f"{path}: cannot open ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise DataFileError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
                            f"{exc.msg}") from exc

