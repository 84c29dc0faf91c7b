"""Problem files, trajectory CSV export, and atomic artifact writing.

Problem files are UTF-8 JSON with fields A, B, C (row-major arrays of
arrays), alpha, f_star, g_star, h_star, Q, q, y0, T_bar, and an optional
step h (default 5e-3).  Trajectories are CSV with header
t,y_1..y_n,u_1..u_m,p_1..p_n, one row per node, the control blank at t0.

All files are written to a temporary sibling and renamed into place, so a
crash never leaves a partial artifact.  Floats are formatted with 17
significant digits, which makes the output byte-reproducible.
"""

from __future__ import annotations

import json
import os
import tempfile
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigError
from .model import ProblemData, Trajectory

DEFAULT_STEP = 5e-3

_PROBLEM_FIELDS = ("A", "B", "C", "alpha", "f_star", "g_star", "h_star",
                   "Q", "q", "y0", "T_bar")


def fmt(x: float) -> str:
    """17-significant-digit decimal form (round-trips float64 exactly)."""
    return format(float(x), ".17g")


def atomic_write(path: str, text: str):
    """Write text to path via a temporary file and rename."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_problem(path: str) -> Tuple[ProblemData, float]:
    """Load a problem file; returns (data, step)."""
    if not os.path.exists(path):
        raise ConfigError(f"problem file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"problem file {path} is not valid JSON: {exc}") from exc
    missing = [f for f in _PROBLEM_FIELDS if f not in doc]
    if missing:
        raise ConfigError(f"problem file {path} is missing fields: {', '.join(missing)}")
    try:
        data = ProblemData(
            A=doc["A"], B=doc["B"], C=doc["C"], alpha=doc["alpha"],
            f_star=doc["f_star"], g_star=doc["g_star"], h_star=doc["h_star"],
            Q=doc["Q"], q=doc["q"], y0=doc["y0"], T_bar=doc["T_bar"],
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"problem file {path}: {exc}") from exc
    h = float(doc.get("h", DEFAULT_STEP))
    if h <= 0.0:
        raise ConfigError("h must be positive")
    return data, h


def problem_document(data: ProblemData, h: Optional[float] = None) -> dict:
    doc = {
        "A": data.A.tolist(), "B": data.B.tolist(), "C": data.C.tolist(),
        "alpha": data.alpha,
        "f_star": data.f_star.tolist(), "g_star": data.g_star.tolist(),
        "h_star": data.h_star.tolist(),
        "Q": data.Q.tolist(), "q": data.q.tolist(), "y0": data.y0.tolist(),
        "T_bar": data.T_bar,
    }
    if h is not None:
        doc["h"] = h
    return doc


def write_problem(path: str, data: ProblemData, h: Optional[float] = None):
    atomic_write(path, json.dumps(problem_document(data, h), indent=2) + "\n")


def trajectory_csv(traj: Trajectory) -> str:
    """Render a trajectory as CSV text (control blank at t0)."""
    n = traj.states.shape[1]
    m = traj.controls.shape[1]
    header = (["t"] + [f"y_{i + 1}" for i in range(n)]
              + [f"u_{j + 1}" for j in range(m)]
              + [f"p_{i + 1}" for i in range(n)])
    lines = [",".join(header)]
    t = traj.grid.nodes()
    for k in range(traj.grid.K + 1):
        row = [fmt(t[k])]
        row += [fmt(v) for v in traj.states[k]]
        if k == 0:
            row += ["" for _ in range(m)]
        else:
            row += [fmt(v) for v in traj.controls[k - 1]]
        if traj.costates is not None:
            row += [fmt(v) for v in traj.costates[k]]
        else:
            row += ["" for _ in range(n)]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def write_trajectory(path: str, traj: Trajectory):
    atomic_write(path, trajectory_csv(traj))


def sweep_csv(rows) -> str:
    """Render sweep rows as CSV; None fields are blank."""
    header = "tau,T,N,error_u,error_y,cost_gap,rho,predicted_bound,status"
    lines = [header]
    for r in rows:
        vals = [fmt(r.tau), fmt(r.T),
                "" if r.N is None else str(r.N)]
        for v in (r.error_u, r.error_y, r.cost_gap, r.rho, r.predicted_bound):
            vals.append("" if v is None else fmt(v))
        vals.append(r.status)
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def matrix_csv(rows, field: str, tau_values, T_values, round_to_int=False) -> str:
    """Triangular (tau x T) matrix of one sweep field; blanks where T < tau."""
    by_cell = {(r.tau, r.T): getattr(r, field) for r in rows}
    lines = ["tau\\T," + ",".join(fmt(T) for T in T_values)]
    for tau in tau_values:
        cells = [fmt(tau)]
        for T in T_values:
            v = by_cell.get((tau, T))
            if v is None or T < tau - 1e-12:
                cells.append("")
            elif round_to_int:
                cells.append(str(int(round(v))))
            else:
                cells.append(fmt(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
