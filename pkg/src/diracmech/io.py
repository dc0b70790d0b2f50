"""CSV serialization of trajectories with atomic writes.

Floats are written with 17 significant digits so that a round trip is exact.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile

import numpy as np

from .errors import ConfigError


def fmt(x) -> str:
    return f"{float(x):.17g}"


def atomic_write_text(path: str, text: str) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def table_text(header, columns) -> str:
    cols = [np.asarray(c, dtype=float).reshape(len(columns[0]), -1) for c in columns]
    data = np.concatenate(cols, axis=1)
    if data.shape[1] != len(header):
        raise ValueError(f"{len(header)} header names for {data.shape[1]} columns")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in data:
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


def trajectory_header(n: int, k: int) -> list:
    return (
        ["t"]
        + [f"q{i + 1}" for i in range(n)]
        + [f"v{i + 1}" for i in range(n)]
        + [f"p{i + 1}" for i in range(n)]
        + [f"lambda{a + 1}" for a in range(k)]
        + ["energy", "constraint_residual"]
    )


def trajectory_csv(traj) -> str:
    n, k = traj.q.shape[-1], traj.lam.shape[-1]
    cols = [traj.t, traj.q, traj.v, traj.p, traj.lam, traj.energy, traj.constraint_residual]
    return table_text(trajectory_header(n, k), cols)


def reduced_header(base: tuple, m: int) -> list:
    return (
        ["t"]
        + [f"q{i + 1}" for i in base]
        + [f"v{i + 1}" for i in base]
        + [f"pbar{a + 1}" for a in range(m)]
        + ["energy"]
    )


def reduced_csv(red, base: tuple) -> str:
    """Reduced trajectory: base coordinates keep their full-space column names."""
    m = red.r.shape[-1]
    return table_text(reduced_header(base, m), [red.t, red.r, red.vbar, red.pbar, red.energy])


def write_trajectory(path: str, traj) -> None:
    atomic_write_text(path, trajectory_csv(traj))


def write_reduced(path: str, red, base: tuple) -> None:
    atomic_write_text(path, reduced_csv(red, base))


def read_table(path: str):
    """``(header, data)`` with ``data`` a float array of shape (rows, columns)."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"{path} is empty")
    header = rows[0]
    try:
        data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise ConfigError(f"{path} is not a numeric table: {exc}") from exc
    return header, data
