"""CSV serialisation for trajectories, grids, decompositions and reports.

All floats are written with 17 significant digits so that values round-trip
exactly; rows end in CRLF as in RFC 4180.
"""
from __future__ import annotations

import csv
import io
from typing import Iterable

import numpy as np

from .core import GaussianDensity, GridAxis, GridDensity, Trajectory


def fmt(v) -> str:
    return format(float(v), ".17g")


def _writer(buf):
    return csv.writer(buf, lineterminator="\r\n")


def _rows(text: str):
    return [r for r in csv.reader(io.StringIO(text)) if r]


# -- trajectories ----------------------------------------------------------

def trajectory_to_csv(traj: Trajectory, every: int = 1) -> str:
    buf = io.StringIO()
    w = _writer(buf)
    w.writerow(["t"] + [f"x{k}" for k in range(traj.n)])
    for t, x in zip(traj.times[::every], traj.states[::every]):
        w.writerow([fmt(t)] + [fmt(v) for v in x])
    return buf.getvalue()


def trajectory_from_csv(text: str, seed: int = 0) -> Trajectory:
    rows = _rows(text)
    if not rows or rows[0][0] != "t":
        raise ValueError("trajectory CSV must start with a 't,x0,...' header")
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    return Trajectory(data[:, 0], data[:, 1:], seed)


# -- quantity tables -------------------------------------------------------

def quantities_to_csv(rows: Iterable[tuple[str, float]]) -> str:
    buf = io.StringIO()
    w = _writer(buf)
    w.writerow(["quantity", "value"])
    for name, value in rows:
        w.writerow([name, fmt(value)])
    return buf.getvalue()


def quantities_from_csv(text: str) -> dict[str, float]:
    rows = _rows(text)
    if not rows or rows[0] != ["quantity", "value"]:
        raise ValueError("expected a 'quantity,value' header")
    out = {}
    for name, value in rows[1:]:
        if name in out:
            raise ValueError(f"duplicate quantity {name!r}")
        out[name] = float(value)
    return out


def kl_curve_to_csv(curve) -> str:
    buf = io.StringIO()
    w = _writer(buf)
    w.writerow(["t", "kl"])
    for t, kl in np.asarray(curve, dtype=float):
        w.writerow([fmt(t), fmt(kl)])
    return buf.getvalue()


# -- grids -----------------------------------------------------------------

def grid_to_csv(grid: GridDensity) -> str:
    """``#axis,k,lower,upper,step`` lines, then one row per grid point."""
    buf = io.StringIO()
    w = _writer(buf)
    for k, ax in enumerate(grid.axes):
        w.writerow(["#axis", k, fmt(ax.lower), fmt(ax.upper), fmt(ax.step)])
    w.writerow([f"x{k}" for k in range(grid.dim)] + ["value"])
    for p, v in zip(grid.points(), grid.values.ravel()):
        w.writerow([fmt(c) for c in p] + [fmt(v)])
    return buf.getvalue()


def grid_from_csv(text: str) -> GridDensity:
    rows = _rows(text)
    axes = []
    k = 0
    while k < len(rows) and rows[k][0] == "#axis":
        _, _, lo, hi, h = rows[k]
        axes.append(GridAxis(float(lo), float(hi), float(h)))
        k += 1
    if not axes:
        raise ValueError("grid CSV has no #axis lines")
    values = np.array([float(r[-1]) for r in rows[k + 1:]])
    return GridDensity(tuple(axes), values.reshape(tuple(ax.count for ax in axes)))


# -- decompositions --------------------------------------------------------

def decomposition_to_csv(decomp) -> str:
    """Blocks ``gamma``, ``q`` and ``sigma``, each introduced by ``#block,<name>``."""
    buf = io.StringIO()
    w = _writer(buf)
    for name, M in (("gamma", decomp.gamma), ("q", decomp.q), ("sigma", decomp.density.covariance)):
        w.writerow(["#block", name])
        for row in M:
            w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def decomposition_from_csv(text: str):
    from .helmholtz import HelmholtzDecomposition

    blocks: dict[str, list] = {}
    current = None
    for r in _rows(text):
        if r[0] == "#block":
            current = r[1]
            blocks[current] = []
        elif current is None:
            raise ValueError("data row before any #block header")
        else:
            blocks[current].append([float(v) for v in r])
    S = np.array(blocks["sigma"])
    return HelmholtzDecomposition(np.array(blocks["gamma"]), np.array(blocks["q"]),
                                  GaussianDensity(np.zeros(S.shape[0]), S))
