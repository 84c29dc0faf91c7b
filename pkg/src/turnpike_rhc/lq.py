"""Finite-horizon linear-quadratic segment solver.

solve_lq solves the discrete optimality system of the implicit-Euler
transcription on one segment:

    y_0 = y_init
    (I - hA) y_k = y_{k-1} + h (B u_k + f),            k = 1..K
    (I - hA') p_{k-1} = p_k + h (C'C y_k + g),         k = 1..K
    alpha u_k + B' p_{k-1} + h_lin = 0,                k = 1..K
    p_K = Qterm y_K + qterm.

This is the exact KKT system of the discrete cost (right-endpoint rectangle
rule), with the costate of interval k attached to its left node; p_0 is the
exact gradient of the optimal value with respect to y_init.  The solver
eliminates the costate with the affine sweep p_k = P_k y_k + s_k, sharing
the P recursion with the Riccati flow module, then rolls the state forward.

reduced_gradient_solve is an independent route to the same minimizer: it
optimizes the reduced discrete cost over the control samples with a
limited-memory BFGS iteration (exact line search on the quadratic model)
until the discrete L2 norm of the reduced gradient is below tolerance.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, NonConvergenceError, SolverError
from .model import Grid, ProblemData, Trajectory, total_cost
from .riccati import _flow_table, StepMatrices, step_matrices

KKT_TOL = 1e-10


@dataclass(frozen=True)
class SegmentProblem:
    """One finite-horizon solve: sources from data, terminal pair, grid."""

    data: ProblemData
    y_init: np.ndarray
    Qterm: np.ndarray
    qterm: np.ndarray
    grid: Grid

    def __post_init__(self):
        object.__setattr__(self, "y_init", np.array(self.y_init, dtype=float))
        object.__setattr__(self, "Qterm", np.atleast_2d(np.array(self.Qterm, dtype=float)))
        object.__setattr__(self, "qterm", np.array(self.qterm, dtype=float))
        n = self.data.n
        if self.y_init.shape != (n,):
            raise DimensionError(f"y_init must have length {n}")
        if self.Qterm.shape != (n, n):
            raise DimensionError(f"Qterm must be {n}x{n}")
        if self.qterm.shape != (n,):
            raise DimensionError(f"qterm must have length {n}")
        if np.abs(self.Qterm - self.Qterm.T).max() > 1e-10:
            raise SolverError("Qterm must be symmetric")


@dataclass(frozen=True)
class LqSolution:
    """Optimal trajectory (with costates), value, and KKT residual."""

    traj: Trajectory
    value: float
    kkt_residual: float


class _AffineTable:
    """Growing s-sweep table for one (dynamics, h, Qterm, qterm, sources)."""

    def __init__(self, flow_table, qterm, f, g, h_lin):
        self.flow = flow_table
        sm = flow_table.sm
        self.hg = sm.h * g
        self.hft = sm.h * (f - (1.0 / sm.alpha) * (sm.B @ h_lin))
        self.s = [np.array(qterm, dtype=float)]
        self.lock = threading.Lock()

    def extend(self, K: int):
        self.flow.extend(K)
        with self.lock:
            P, Gam = self.flow.P, self.flow.Gam
            while len(self.s) <= K:
                j = len(self.s)
                self.s.append(P[j] @ self.hft + Gam[j] @ (self.s[-1] + self.hg))


_affine_tables: dict = {}
_affine_lock = threading.Lock()


def _affine_table(seg: SegmentProblem) -> _AffineTable:
    data = seg.data
    h = seg.grid.h
    key = (data.dynamics_key(), np.float64(h).tobytes(),
           np.ascontiguousarray(seg.Qterm).tobytes(),
           np.ascontiguousarray(seg.qterm).tobytes(),
           data.source_key())
    with _affine_lock:
        table = _affine_tables.get(key)
        if table is None:
            flow = _flow_table(data, seg.Qterm, h)
            table = _AffineTable(flow, seg.qterm, data.f_star, data.g_star,
                                 data.h_star)
            _affine_tables[key] = table
    return table


def clear_affine_cache():
    with _affine_lock:
        _affine_tables.clear()


def kkt_residuals(seg: SegmentProblem, traj: Trajectory) -> float:
    """Max norm of the discrete optimality residuals at every node."""
    data = seg.data
    h = seg.grid.h
    E = np.eye(data.n) - h * data.A
    Y, U, P = traj.states, traj.controls, traj.costates
    r_init = np.linalg.norm(Y[0] - seg.y_init)
    r_state = Y[1:] @ E.T - Y[:-1] - h * (U @ data.B.T + data.f_star)
    r_adj = P[:-1] @ E - P[1:] - h * (Y[1:] @ (data.C.T @ data.C) + data.g_star)
    r_ctrl = data.alpha * U + P[:-1] @ data.B + data.h_star
    r_term = np.linalg.norm(P[-1] - seg.Qterm @ Y[-1] - seg.qterm)
    worst = max(
        r_init,
        np.sqrt((r_state ** 2).sum(axis=1)).max(),
        np.sqrt((r_adj ** 2).sum(axis=1)).max(),
        np.sqrt((r_ctrl ** 2).sum(axis=1)).max(),
        r_term,
    )
    return float(worst)


def _magnitude(seg: SegmentProblem) -> float:
    data = seg.data
    return float(sum(np.linalg.norm(M) for M in
                     (data.A, data.B, data.C, data.f_star, data.g_star,
                      data.h_star, seg.Qterm, seg.qterm, seg.y_init)))


def solve_lq(seg: SegmentProblem) -> LqSolution:
    """Solve one segment by the affine backward sweep and forward rollout."""
    data = seg.data
    if data.alpha <= 0.0:
        raise SolverError("alpha must be positive")
    h, K = seg.grid.h, seg.grid.K
    table = _affine_table(seg)
    table.extend(K)
    P, s = table.flow.P, table.s
    sm: StepMatrices = table.flow.sm

    n, m = data.n, data.m
    Y = np.empty((K + 1, n))
    U = np.empty((K, m))
    Pc = np.empty((K + 1, n))
    Y[0] = seg.y_init
    Einv, B, Bt = sm.Einv, data.B, data.B.T
    h_lin, inv_a = data.h_star, 1.0 / data.alpha
    hf = h * data.f_star
    y = Y[0]
    for k in range(1, K + 1):
        tg = K - k + 1
        p = P[tg] @ y + s[tg]
        Pc[k - 1] = p
        u = -inv_a * (h_lin + Bt @ p)
        U[k - 1] = u
        y = Einv @ (y + h * (B @ u) + hf)
        Y[k] = y
    Pc[K] = seg.Qterm @ Y[K] + seg.qterm

    traj = Trajectory(grid=seg.grid, states=Y, controls=U, costates=Pc)
    res = kkt_residuals(seg, traj)
    if res > KKT_TOL * (1.0 + _magnitude(seg)):
        raise SolverError(f"KKT residual {res:.3e} exceeds tolerance")
    report = total_cost(data, traj, seg.Qterm, seg.qterm)
    return LqSolution(traj=traj, value=report.total, kkt_residual=res)


def value_and_gradient(seg: SegmentProblem):
    """Optimal value and its exact gradient with respect to y_init (= p_0)."""
    sol = solve_lq(seg)
    return sol.value, sol.traj.costates[0].copy()


def _reduced_gradient(u_flat: np.ndarray, seg: SegmentProblem, sm: StepMatrices):
    """Rollout + adjoint back-substitution; returns (states, costates, grad).

    grad is the Euclidean gradient of the discrete cost with respect to the
    stacked control samples; dividing by sqrt(h) converts its norm to the
    discrete L2 norm of the reduced gradient.
    """
    data = seg.data
    h, K = seg.grid.h, seg.grid.K
    n, m = data.n, data.m
    U = u_flat.reshape(K, m)
    Y = np.empty((K + 1, n))
    Y[0] = seg.y_init
    Einv, B = sm.Einv, data.B
    hf = h * data.f_star
    for k in range(1, K + 1):
        Y[k] = Einv @ (Y[k - 1] + h * (B @ U[k - 1]) + hf)
    P = np.empty((K + 1, n))
    P[K] = seg.Qterm @ Y[K] + seg.qterm
    EinvT = Einv.T
    CtC = data.C.T @ data.C
    g_vec = data.g_star
    grad = np.empty((K, m))
    for k in range(K, 0, -1):
        p = EinvT @ (P[k] + h * (CtC @ Y[k] + g_vec))
        P[k - 1] = p
        grad[k - 1] = h * (data.alpha * U[k - 1] + data.h_star + data.B.T @ p)
    return Y, P, grad.ravel()


def reduced_gradient_solve(seg: SegmentProblem, tol: float,
                           memory: int = 20) -> LqSolution:
    """Minimize the reduced discrete cost with limited-memory BFGS.

    Stops when the discrete L2 norm of the reduced gradient is <= tol; the
    quadratic structure gives an exact line search from one extra gradient
    evaluation per iteration.  Raises NonConvergenceError past 10*K*m
    iterations.
    """
    if tol <= 0.0:
        raise SolverError("tol must be positive")
    data = seg.data
    if data.alpha <= 0.0:
        raise SolverError("alpha must be positive")
    h, K = seg.grid.h, seg.grid.K
    sm = step_matrices(data, h)
    sqrt_h = np.sqrt(h)

    u = np.zeros(K * data.m)
    Y, P, g = _reduced_gradient(u, seg, sm)
    cap = 10 * K * data.m
    S, Yd, R = [], [], []
    for _ in range(cap + 1):
        if np.linalg.norm(g) / sqrt_h <= tol:
            break
        # L-BFGS two-loop recursion
        d = g.copy()
        alphas = []
        for s_v, y_v, r in zip(reversed(S), reversed(Yd), reversed(R)):
            a = r * (s_v @ d)
            alphas.append(a)
            d -= a * y_v
        if Yd:
            d *= (S[-1] @ Yd[-1]) / (Yd[-1] @ Yd[-1])
        for (s_v, y_v, r), a in zip(zip(S, Yd, R), reversed(alphas)):
            d += (a - r * (y_v @ d)) * s_v
        d = -d
        gd = g @ d
        if gd >= 0.0:
            d = -g
            gd = -(g @ g)
        # exact step: the gradient map is affine, so H d costs one evaluation
        _, _, g_probe = _reduced_gradient(u + d, seg, sm)
        dHd = d @ (g_probe - g)
        t = 1.0 if dHd <= 0.0 else -gd / dHd
        u = u + t * d
        Y, P, g_new = _reduced_gradient(u, seg, sm)
        s_v = t * d
        y_v = g_new - g
        sy = s_v @ y_v
        if sy > 0.0:
            S.append(s_v)
            Yd.append(y_v)
            R.append(1.0 / sy)
            if len(S) > memory:
                S.pop(0)
                Yd.pop(0)
                R.pop(0)
        g = g_new
    else:
        raise NonConvergenceError(
            f"reduced-gradient solver: {cap} iterations without reaching tol={tol:g}")

    traj = Trajectory(grid=seg.grid, states=Y, controls=u.reshape(K, data.m),
                      costates=P)
    report = total_cost(data, traj, seg.Qterm, seg.qterm)
    return LqSolution(traj=traj, value=report.total,
                      kkt_residual=kkt_residuals(seg, traj))
