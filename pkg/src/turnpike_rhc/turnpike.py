"""Steady-state problem, turnpike diagnostics, and the infinite-horizon limit.

The steady-state problem minimizes the running cost over states and controls
satisfying A y + B u + f* = 0.  Its unique solution (y*, u*) and multiplier
p* are constructed through the closed-loop matrix, which is invertible
because it is Hurwitz; the construction is verified a posteriori by the
stationary KKT residuals.

turnpike_check fits the two-sided exponential envelope

    max(||y(t) - y*||, ||p(t) - p*||)
        <= M (exp(-lam t) ||y0 - y*|| + exp(-lam (Tbar - t)) ||q~||)

to a solved trajectory, where q~ = q - p* + Q y* is the effective terminal
mismatch.

overtaking_solution builds the infinite-horizon solution on the same
discrete footing as the segment solver: the deviation from the steady state
rolls forward with the stationary closed-loop one-step map, and the costate
deviation is the stationary flow matrix times the state deviation.  On any
finite window this coincides with solve_lq under the terminal pair
(P_inf, p* - P_inf y*), where P_inf is the stationary flow matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import SolverError
from .model import Grid, ProblemData, Trajectory, running_cost, total_cost
from .lq import SegmentProblem, solve_lq
from .riccati import CareSolution, stationary_flow_matrix, step_matrices

STATIC_KKT_TOL = 1e-10
DEGENERATE_DEVIATION = 1e-12
ENVELOPE_FLOOR = 1e-12
RATE_FIT_SKIP = 5  # boundary nodes excluded from each rate fit


@dataclass(frozen=True)
class SteadyState:
    """Solution of the steady-state problem with its multiplier.

    q_tilde = q - p* + Q y* is the terminal mismatch driving the boundary
    layer at the right end of the horizon; v* is the optimal running cost.
    """

    y_star: np.ndarray
    u_star: np.ndarray
    p_star: np.ndarray
    v_star: float
    q_tilde: np.ndarray


def static_kkt_residual(data: ProblemData, y: np.ndarray, u: np.ndarray,
                        p: np.ndarray) -> float:
    r1 = data.A @ y + data.B @ u + data.f_star
    r2 = -data.A.T @ p - data.C.T @ data.C @ y - data.g_star
    r3 = data.alpha * u + data.B.T @ p + data.h_star
    return float(max(np.linalg.norm(r1), np.linalg.norm(r2), np.linalg.norm(r3)))


def solve_static(data: ProblemData, care: CareSolution) -> SteadyState:
    """Solve the steady-state problem through the closed-loop matrix."""
    inv_a = 1.0 / data.alpha
    rhs_r = care.Pi @ data.f_star - inv_a * care.Pi @ (data.B @ data.h_star) + data.g_star
    try:
        r = -np.linalg.solve(care.A_pi.T, rhs_r)
        y = np.linalg.solve(
            care.A_pi,
            inv_a * data.B @ data.h_star - data.f_star + inv_a * (data.B @ (data.B.T @ r)),
        )
    except np.linalg.LinAlgError as exc:
        raise SolverError("closed-loop matrix is numerically singular") from exc
    p = care.Pi @ y + r
    u = -inv_a * (data.h_star + data.B.T @ p)
    res = static_kkt_residual(data, y, u, p)
    scale = 1.0 + float(np.linalg.norm(data.f_star) + np.linalg.norm(data.g_star)
                        + np.linalg.norm(data.h_star))
    if res > STATIC_KKT_TOL * scale:
        raise SolverError(f"stationary KKT residual {res:.3e} above tolerance")
    v = running_cost(data, y, u)
    q_tilde = data.q - p + data.Q @ y
    return SteadyState(y_star=y, u_star=u, p_star=p, v_star=v, q_tilde=q_tilde)


@dataclass(frozen=True)
class TurnpikeReport:
    """Fitted envelope constant, boundary decay rates, and mid-horizon floor."""

    fitted_M: float
    left_rate: float
    right_rate: float
    left_residual: float
    right_residual: float
    max_mid_deviation: float
    degenerate: bool


def deviation_profile(traj: Trajectory, steady: SteadyState, lam: float):
    """Per-node deviations from the steady state and envelope values.

    Returns (t, dev_y, dev_p, dev, envelope) arrays over the grid nodes.
    """
    if traj.costates is None:
        raise SolverError("turnpike diagnostics need costates")
    t = traj.grid.nodes()
    dev_y = np.linalg.norm(traj.states - steady.y_star, axis=1)
    dev_p = np.linalg.norm(traj.costates - steady.p_star, axis=1)
    dev = np.maximum(dev_y, dev_p)
    T_bar = traj.grid.t1
    y0_dist = float(np.linalg.norm(traj.states[0] - steady.y_star))
    q_dist = float(np.linalg.norm(steady.q_tilde))
    env = y0_dist * np.exp(-lam * (t - traj.grid.t0)) + q_dist * np.exp(-lam * (T_bar - t))
    return t, dev_y, dev_p, dev, env


def _rate_fit(x: np.ndarray, dev: np.ndarray):
    """OLS decay rate of dev ~ exp(-rate * x); returns (rate, rms residual)."""
    mask = dev > 0.0
    x, ld = x[mask], np.log(dev[mask])
    if x.size < 3:
        return 0.0, float("inf")
    coef = np.polyfit(x, ld, 1)
    resid = ld - np.polyval(coef, x)
    return float(-coef[0]), float(np.sqrt(np.mean(resid ** 2)))


def turnpike_check(traj: Trajectory, steady: SteadyState, lam: float) -> TurnpikeReport:
    """Fit the turnpike envelope to one solved trajectory."""
    t, _, _, dev, env = deviation_profile(traj, steady, lam)
    K = traj.grid.K
    if dev.max() <= DEGENERATE_DEVIATION:
        return TurnpikeReport(fitted_M=0.0, left_rate=0.0, right_rate=0.0,
                              left_residual=0.0, right_residual=0.0,
                              max_mid_deviation=float(dev.max()), degenerate=True)
    usable = env > ENVELOPE_FLOOR
    if not usable.any():
        return TurnpikeReport(fitted_M=0.0, left_rate=0.0, right_rate=0.0,
                              left_residual=0.0, right_residual=0.0,
                              max_mid_deviation=float(dev.max()), degenerate=True)
    fitted_M = float((dev[usable] / env[usable]).max())

    q = K // 4
    lo = slice(RATE_FIT_SKIP, q + 1)
    hi = slice(K - q, K + 1 - RATE_FIT_SKIP)
    left_rate, left_res = _rate_fit(t[lo] - traj.grid.t0, dev[lo])
    right_rate, right_res = _rate_fit(traj.grid.t1 - t[hi], dev[hi])

    third = K // 3
    mid = dev[third:2 * third + 1]
    return TurnpikeReport(
        fitted_M=fitted_M,
        left_rate=left_rate,
        right_rate=right_rate,
        left_residual=left_res,
        right_residual=right_res,
        max_mid_deviation=float(mid.max()) if mid.size else float(dev.max()),
        degenerate=False,
    )


def _homogeneous(data: ProblemData) -> ProblemData:
    zero_n = np.zeros(data.n)
    return replace(data, f_star=zero_n, g_star=zero_n, h_star=np.zeros(data.m))


def value_relation_check(data: ProblemData, steady: SteadyState, grid: Grid) -> float:
    """Max mismatch of the shifted value-function identity at theta in {0, Tbar/2}.

    The identity states

        V(theta, y_theta) = V0_{Tbar-theta, Q, q~}(y_theta - y*) + <p*, y_theta>
                            + (Tbar - theta) v* + 1/2 <y*, Q y*> + <q - p*, y*>

    where V is the value of the full problem from time theta along the
    optimal trajectory, and V0 is the homogeneous value with terminal linear
    weight q~.
    """
    full = solve_lq(SegmentProblem(data=data, y_init=data.y0, Qterm=data.Q,
                                   qterm=data.q, grid=grid))
    homog = _homogeneous(data)
    const = (0.5 * steady.y_star @ data.Q @ steady.y_star
             + (data.q - steady.p_star) @ steady.y_star)
    worst = 0.0
    for frac in (0, grid.K // 2):
        theta = grid.t0 + frac * grid.h
        y_theta = full.traj.states[frac]
        sub_grid = Grid(theta, grid.t1, grid.h, grid.K - frac)
        lhs = solve_lq(SegmentProblem(data=data, y_init=y_theta, Qterm=data.Q,
                                      qterm=data.q, grid=sub_grid)).value
        v0 = solve_lq(SegmentProblem(data=homog, y_init=y_theta - steady.y_star,
                                     Qterm=data.Q, qterm=steady.q_tilde,
                                     grid=sub_grid)).value
        rhs = (v0 + steady.p_star @ y_theta + (grid.t1 - theta) * steady.v_star + const)
        worst = max(worst, abs(lhs - rhs))
    return float(worst)


def overtaking_solution(data: ProblemData, steady: SteadyState,
                        care: CareSolution, grid: Grid) -> Trajectory:
    """Infinite-horizon solution sampled on [grid.t0, grid.t1].

    The deviation from the steady state follows the stationary closed-loop
    one-step map of the discretization; restricted to any finite window this
    is the segment solution under the terminal pair (P_inf, p* - P_inf y*).
    """
    del care
    h, K = grid.h, grid.K
    P_inf = stationary_flow_matrix(data, h)
    sm = step_matrices(data, h)
    M = sm.Einv @ (np.eye(data.n) - sm.beta @ P_inf)
    inv_a = 1.0 / data.alpha

    Y = np.empty((K + 1, data.n))
    U = np.empty((K, data.m))
    P = np.empty((K + 1, data.n))
    ytil = data.y0 - steady.y_star
    Y[0] = data.y0
    P[0] = steady.p_star + P_inf @ ytil
    for k in range(1, K + 1):
        U[k - 1] = steady.u_star - inv_a * (data.B.T @ (P_inf @ ytil))
        ytil = M @ ytil
        Y[k] = steady.y_star + ytil
        P[k] = steady.p_star + P_inf @ ytil
    return Trajectory(grid=grid, states=Y, controls=U, costates=P)


def asymptotic_cost_check(data: ProblemData, steady: SteadyState,
                          care: CareSolution, T: float, h: float = 5e-3) -> float:
    """Mismatch of the closed-form running cost of the infinite-horizon solution.

    Compares J(u, y, T) (no terminal term) against

        T v* + 1/2 <d0, P d0> - <p*, dT> - 1/2 <dT, P dT>,

    with d0 = y0 - y*, dT = y(T) - y*, and P the stationary flow matrix; the
    identity is exact for the discretized problem.
    """
    grid = Grid.span(0.0, T, h)
    traj = overtaking_solution(data, steady, care, grid)
    P_inf = stationary_flow_matrix(data, grid.h)
    J = total_cost(data, traj, np.zeros((data.n, data.n)), np.zeros(data.n)).total
    d0 = data.y0 - steady.y_star
    dT = traj.states[-1] - steady.y_star
    rhs = (T * steady.v_star + 0.5 * d0 @ P_inf @ d0
           - steady.p_star @ dT - 0.5 * dT @ P_inf @ dT)
    return float(abs(J - rhs))
