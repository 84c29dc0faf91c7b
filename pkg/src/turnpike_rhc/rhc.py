"""Receding-horizon drivers, terminal-cost construction, and the sweep harness.

The finite-horizon driver repeats: solve a segment of length T from the
current state with a surrogate terminal cost, keep the first tau of the
solution, advance.  After N iterations one final segment is solved on
(N tau, Tbar) with the problem's true terminal pair.  The infinite-horizon
driver uses a time-independent quadratic terminal cost and no final exact
segment; its errors are measured against the stationary overtaking solution.

Terminal-cost modes:

  zero      phi(t, y) = <p~, y>
  constant  phi(t, y) = 1/2 <y - y*, Pi~ (y - y*)> + <G~ q~, y> + <p~, y>
  exact     Pi~ and G~ are resolved from the backward Riccati flow at the
            matching time-to-go, with p~ = p*; by dynamic programming the
            driver then reproduces the one-shot solution.

The sweep harness runs a (tau, T) grid of finite-horizon cells, one row per
feasible cell, with deterministic ordering and output independent of the
worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, GridError, SolverError
from .model import Grid, ProblemData, Trajectory, l2_distance, steps_of, total_cost
from .lq import LqSolution, SegmentProblem, solve_lq
from .riccati import CareSolution, riccati_flow, stationary_flow_matrix
from .turnpike import SteadyState, overtaking_solution


@dataclass(frozen=True)
class TerminalCostSpec:
    """Surrogate terminal cost: mode plus the matrices it needs."""

    mode: str
    pi_tilde: Optional[np.ndarray] = None
    g_tilde: Optional[np.ndarray] = None
    p_tilde: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mode not in ("zero", "constant", "exact"):
            raise ConfigError(f"unknown terminal mode {self.mode!r}")
        for name in ("pi_tilde", "g_tilde", "p_tilde"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=float))
        if self.mode == "exact":
            if any(v is not None for v in (self.pi_tilde, self.g_tilde, self.p_tilde)):
                raise ConfigError("exact mode carries no matrices")
        if self.pi_tilde is not None:
            P = self.pi_tilde
            if np.abs(P - P.T).max() > 1e-10:
                raise ConfigError("pi_tilde must be symmetric")
            if np.linalg.eigvalsh(0.5 * (P + P.T)).min() < -1e-10:
                raise ConfigError("pi_tilde must be positive semi-definite")

    @classmethod
    def zero(cls, p_tilde) -> "TerminalCostSpec":
        return cls(mode="zero", p_tilde=p_tilde)

    @classmethod
    def constant(cls, pi_tilde, p_tilde, g_tilde=None) -> "TerminalCostSpec":
        return cls(mode="constant", pi_tilde=pi_tilde, g_tilde=g_tilde,
                   p_tilde=p_tilde)

    @classmethod
    def exact(cls) -> "TerminalCostSpec":
        return cls(mode="exact")


class TerminalCost:
    """Evaluable surrogate terminal cost with its quadratic terminal pair."""

    def __init__(self, spec: TerminalCostSpec, steady: SteadyState,
                 flow_provider: Optional[Callable] = None,
                 T_bar: Optional[float] = None):
        if spec.mode == "exact" and flow_provider is None:
            raise ConfigError("exact mode requires a flow provider")
        self.spec = spec
        self.steady = steady
        self.provider = flow_provider
        self.T_bar = T_bar
        n = steady.y_star.shape[0]
        self._zero_mat = np.zeros((n, n))

    def _pieces(self, time_to_go: float):
        """(Pi~, G~ q~ + p~) at the given time-to-go."""
        spec, steady = self.spec, self.steady
        if spec.mode == "zero":
            return self._zero_mat, spec.p_tilde
        if spec.mode == "constant":
            lin = spec.p_tilde.copy()
            if spec.g_tilde is not None:
                lin = lin + spec.g_tilde @ steady.q_tilde
            return spec.pi_tilde, lin
        P, G = self.provider(time_to_go)
        return P, G @ steady.q_tilde + steady.p_star

    def pair_at(self, time_to_go: float):
        """Terminal pair (Qterm, qterm) equivalent to phi up to a constant."""
        P, lin = self._pieces(time_to_go)
        return P, lin - P @ self.steady.y_star

    def _ttg(self, t: float) -> float:
        if self.T_bar is None:
            raise ConfigError("absolute-time evaluation needs T_bar")
        return self.T_bar - t

    def value(self, t: float, y: np.ndarray) -> float:
        P, lin = self._pieces(self._ttg(t))
        d = y - self.steady.y_star
        return float(0.5 * d @ P @ d + lin @ y)

    def gradient(self, t: float, y: np.ndarray) -> np.ndarray:
        P, lin = self._pieces(self._ttg(t))
        return P @ (y - self.steady.y_star) + lin


def build_terminal_cost(spec: TerminalCostSpec, steady: SteadyState,
                        flow_provider: Optional[Callable] = None,
                        T_bar: Optional[float] = None) -> TerminalCost:
    """Build the evaluable phi for one spec; exact mode needs a flow provider."""
    return TerminalCost(spec, steady, flow_provider, T_bar)


@dataclass(frozen=True)
class RhcConfig:
    """Sampling time, prediction horizon, iteration count, terminal cost, step."""

    tau: float
    T: float
    N: int
    terminal: TerminalCostSpec
    h: float

    def __post_init__(self):
        if self.tau <= 0.0 or self.T <= 0.0 or self.h <= 0.0:
            raise ConfigError("tau, T, h must be positive")
        if self.tau > self.T + 1e-12:
            raise ConfigError("tau must not exceed T")
        if self.N < 0:
            raise ConfigError("N must be nonnegative")
        steps_of(self.tau, self.h, "tau")
        steps_of(self.T, self.h, "T")


def default_iterations(T_bar: float, tau: float, T: float) -> int:
    """Iteration count floor((Tbar - 2T)/tau), clamped to be nonnegative."""
    return max(0, int(np.floor((T_bar - 2.0 * T) / tau + 1e-12)))


@dataclass(frozen=True)
class IterRecord:
    """Per-iteration diagnostics: handoff state error and kept-window error."""

    n: int
    handoff_state_error: float
    segment_error: float


@dataclass(frozen=True)
class RhcResult:
    """Stitched trajectory with errors against the reference solution."""

    traj: Trajectory
    error_u: float
    error_y: float
    cost_gap: float
    per_iter: tuple


def _window_error(states_a, controls_a, states_b, controls_b, grid: Grid) -> float:
    du = l2_distance(controls_a, controls_b, grid)
    dy = l2_distance(states_a, states_b, grid)
    sup = float(np.linalg.norm(states_a - states_b, axis=1).max())
    return max(du, dy, sup)


def run_rhc_finite(data: ProblemData, steady: SteadyState, care: CareSolution,
                   cfg: RhcConfig, reference: Optional[LqSolution] = None) -> RhcResult:
    """Finite-horizon receding-horizon run on [0, Tbar].

    The reference is the one-shot segment solution on the full horizon; pass
    it in when running many configurations against the same problem.
    """
    h = cfg.h
    K_bar = steps_of(data.T_bar, h, "T_bar")
    K_tau = steps_of(cfg.tau, h, "tau")
    K_T = steps_of(cfg.T, h, "T")
    if cfg.N * K_tau + K_T > K_bar:
        raise GridError("N*tau + T exceeds T_bar")

    grid = Grid(0.0, data.T_bar, h, K_bar)
    if reference is None:
        reference = solve_lq(SegmentProblem(data=data, y_init=data.y0,
                                            Qterm=data.Q, qterm=data.q, grid=grid))
    provider = None
    if cfg.terminal.mode == "exact":
        flow = riccati_flow(care, data, data.Q, data.T_bar, h)
        provider = lambda s: (flow.pi_at(s), flow.g_at(s))
    phi = build_terminal_cost(cfg.terminal, steady, provider, data.T_bar)

    n, m = data.n, data.m
    Y = np.empty((K_bar + 1, n))
    U = np.empty((K_bar, m))
    P = np.empty((K_bar + 1, n))
    Y[0] = data.y0
    y_cur = data.y0.copy()
    records = []
    ref_Y, ref_U = reference.traj.states, reference.traj.controls

    for it in range(cfg.N):
        k0 = it * K_tau
        b_n = float(np.linalg.norm(y_cur - ref_Y[k0]))
        t0 = k0 * h
        seg_grid = Grid(t0, t0 + cfg.T, h, K_T)
        Qt, qt = phi.pair_at(data.T_bar - (t0 + cfg.T))
        sol = solve_lq(SegmentProblem(data=data, y_init=y_cur, Qterm=Qt,
                                      qterm=qt, grid=seg_grid))
        Y[k0 + 1:k0 + K_tau + 1] = sol.traj.states[1:K_tau + 1]
        U[k0:k0 + K_tau] = sol.traj.controls[:K_tau]
        P[k0:k0 + K_tau] = sol.traj.costates[:K_tau]
        y_cur = sol.traj.states[K_tau].copy()
        win = Grid(t0, t0 + cfg.tau, h, K_tau)
        a_n = _window_error(Y[k0:k0 + K_tau + 1], U[k0:k0 + K_tau],
                            ref_Y[k0:k0 + K_tau + 1], ref_U[k0:k0 + K_tau], win)
        records.append(IterRecord(n=it, handoff_state_error=b_n, segment_error=a_n))

    # final segment uses the true terminal pair (Q, q)
    k0 = cfg.N * K_tau
    b_N = float(np.linalg.norm(y_cur - ref_Y[k0]))
    t0 = k0 * h
    fin_grid = Grid(t0, data.T_bar, h, K_bar - k0)
    sol = solve_lq(SegmentProblem(data=data, y_init=y_cur, Qterm=data.Q,
                                  qterm=data.q, grid=fin_grid))
    Y[k0:] = sol.traj.states
    U[k0:] = sol.traj.controls
    P[k0:] = sol.traj.costates
    a_N = _window_error(Y[k0:], U[k0:], ref_Y[k0:], ref_U[k0:], fin_grid)
    records.append(IterRecord(n=cfg.N, handoff_state_error=b_N, segment_error=a_N))

    traj = Trajectory(grid=grid, states=Y, controls=U, costates=P)
    error_u = l2_distance(U, ref_U, grid)
    error_y = l2_distance(Y, ref_Y, grid)
    cost_gap = total_cost(data, traj, data.Q, data.q).total - reference.value
    return RhcResult(traj=traj, error_u=error_u, error_y=error_y,
                     cost_gap=float(cost_gap), per_iter=tuple(records))


def run_rhc_infinite(data: ProblemData, steady: SteadyState, care: CareSolution,
                     cfg: RhcConfig, T_end: float) -> RhcResult:
    """Infinite-horizon receding-horizon run; output covers (0, N tau).

    Requires a time-independent quadratic terminal cost (constant mode with
    no G~ part).  Errors are measured against the stationary overtaking
    solution; the cost gap uses the terminal pair under which that solution
    is exactly optimal on the window.
    """
    spec = cfg.terminal
    if spec.mode != "constant" or (spec.g_tilde is not None
                                   and np.any(spec.g_tilde != 0.0)):
        raise ConfigError("infinite-horizon runs need a constant terminal cost "
                          "with no G~ part")
    h = cfg.h
    K_tau = steps_of(cfg.tau, h, "tau")
    K_T = steps_of(cfg.T, h, "T")
    K_out = cfg.N * K_tau
    if cfg.N * cfg.tau > T_end + 1e-12:
        raise GridError("N*tau exceeds T_end")
    if cfg.N < 1:
        raise ConfigError("infinite-horizon runs need N >= 1")

    ref = overtaking_solution(data, steady, care, Grid.span(0.0, T_end, h))
    phi = build_terminal_cost(spec, steady)
    Qt, qt = phi.pair_at(0.0)

    n, m = data.n, data.m
    Y = np.empty((K_out + 1, n))
    U = np.empty((K_out, m))
    P = np.empty((K_out + 1, n))
    Y[0] = data.y0
    y_cur = data.y0.copy()
    records = []
    for it in range(cfg.N):
        k0 = it * K_tau
        b_n = float(np.linalg.norm(y_cur - ref.states[k0]))
        t0 = k0 * h
        seg_grid = Grid(t0, t0 + cfg.T, h, K_T)
        sol = solve_lq(SegmentProblem(data=data, y_init=y_cur, Qterm=Qt,
                                      qterm=qt, grid=seg_grid))
        Y[k0 + 1:k0 + K_tau + 1] = sol.traj.states[1:K_tau + 1]
        U[k0:k0 + K_tau] = sol.traj.controls[:K_tau]
        P[k0:k0 + K_tau] = sol.traj.costates[:K_tau]
        if it == cfg.N - 1:
            P[k0 + K_tau] = sol.traj.costates[K_tau]
        y_cur = sol.traj.states[K_tau].copy()
        win = Grid(t0, t0 + cfg.tau, h, K_tau)
        a_n = _window_error(Y[k0:k0 + K_tau + 1], U[k0:k0 + K_tau],
                            ref.states[k0:k0 + K_tau + 1],
                            ref.controls[k0:k0 + K_tau], win)
        records.append(IterRecord(n=it, handoff_state_error=b_n, segment_error=a_n))

    grid = Grid(0.0, cfg.N * cfg.tau, h, K_out)
    traj = Trajectory(grid=grid, states=Y, controls=U, costates=P)
    error_u = l2_distance(U, ref.controls[:K_out], grid)
    error_y = l2_distance(Y, ref.states[:K_out + 1], grid)
    # gap in the objective whose exact minimizer is the overtaking solution
    P_inf = stationary_flow_matrix(data, h)
    q_inf = steady.p_star - P_inf @ steady.y_star
    ref_win = Trajectory(grid=grid, states=ref.states[:K_out + 1],
                         controls=ref.controls[:K_out])
    gap = (total_cost(data, traj, P_inf, q_inf).total
           - total_cost(data, ref_win, P_inf, q_inf).total)
    return RhcResult(traj=traj, error_u=error_u, error_y=error_y,
                     cost_gap=float(gap), per_iter=tuple(records))


def rho_statistic(error_u: float, tau: float, T: float, lam: float) -> float:
    """Flatness statistic ln(error) + 2 lam T - lam tau."""
    if error_u <= 0.0:
        raise SolverError("rho is undefined for a nonpositive error")
    return float(np.log(error_u) + 2.0 * lam * T - lam * tau)


@dataclass(frozen=True)
class BoundInputs:
    """Norm inputs of the error bound, sampled from the backward flow."""

    pi_gap: float
    g_gap: float
    y0_dist: float
    T_bar: float


def bound_inputs(spec: TerminalCostSpec, data: ProblemData, steady: SteadyState,
                 care: CareSolution, h: float, T: float) -> BoundInputs:
    """Sample ||Pi~ - Pi(.,Q)|| and ||G~ - G(.,Q)|| maxima over {h, .., T}.

    The suprema over all horizons are approximated by maxima over the flow
    samples up to the prediction horizon.
    """
    y0_dist = float(np.linalg.norm(data.y0 - steady.y_star))
    if spec.mode == "exact":
        return BoundInputs(0.0, 0.0, y0_dist, data.T_bar)
    flow = riccati_flow(care, data, data.Q, T, h)
    K = len(flow.P_seq) - 1
    pi_gap = 0.0
    g_gap = 0.0
    for j in range(1, K + 1):
        P_j = flow.P_seq[j]
        G_j = flow.G_seq[j]
        Pt = spec.pi_tilde if spec.mode == "constant" else 0.0
        Gt = spec.g_tilde if (spec.mode == "constant" and spec.g_tilde is not None) else 0.0
        pi_gap = max(pi_gap, float(np.linalg.norm(Pt - P_j, 2)))
        g_gap = max(g_gap, float(np.exp(care.lam * j * h)
                                 * np.linalg.norm(Gt - G_j, 2)))
    return BoundInputs(pi_gap, g_gap, y0_dist, data.T_bar)


def predicted_bound(cfg: RhcConfig, steady: SteadyState, care: CareSolution,
                    inputs: BoundInputs) -> float:
    """Shape of the error bound with unit leading constant:

    exp(-lam (T - tau)) * ( exp(-lam T) K1
                            + exp(-lam (Tbar - (N tau + T))) K2
                            + N ||p~ - p*|| ).
    """
    lam = care.lam
    K1 = inputs.pi_gap * inputs.y0_dist
    K2 = (inputs.pi_gap + inputs.g_gap) * float(np.linalg.norm(steady.q_tilde))
    if cfg.terminal.mode == "exact":
        p_term = 0.0
    else:
        p_term = float(np.linalg.norm(cfg.terminal.p_tilde - steady.p_star))
    inner = (np.exp(-lam * cfg.T) * K1
             + np.exp(-lam * (inputs.T_bar - (cfg.N * cfg.tau + cfg.T))) * K2
             + cfg.N * p_term)
    return float(np.exp(-lam * (cfg.T - cfg.tau)) * inner)


@dataclass(frozen=True)
class SweepRow:
    """One sweep cell; numeric fields are None when the cell was skipped."""

    tau: float
    T: float
    N: Optional[int]
    error_u: Optional[float]
    error_y: Optional[float]
    cost_gap: Optional[float]
    rho: Optional[float]
    predicted_bound: Optional[float]
    status: str


# Worker-process state, installed once per process by the pool initializer.
_WORKER_CTX: dict = {}


def _init_worker(data, steady, care, reference, terminal, h, N_override):
    _WORKER_CTX.update(data=data, steady=steady, care=care, reference=reference,
                       terminal=terminal, h=h, N_override=N_override)


def _run_cell(cell) -> SweepRow:
    tau, T = cell
    ctx = _WORKER_CTX
    data, steady, care = ctx["data"], ctx["steady"], ctx["care"]
    h = ctx["h"]
    N = ctx["N_override"]
    if N is None:
        N = default_iterations(data.T_bar, tau, T)
    try:
        cfg = RhcConfig(tau=tau, T=T, N=N, terminal=ctx["terminal"], h=h)
        if N * tau + T > data.T_bar + 1e-12:
            raise GridError("N*tau + T exceeds T_bar")
        result = run_rhc_finite(data, steady, care, cfg, reference=ctx["reference"])
        rho = (rho_statistic(result.error_u, tau, T, care.lam)
               if result.error_u > 0.0 else None)
        bound = predicted_bound(cfg, steady, care,
                                bound_inputs(ctx["terminal"], data, steady, care, h, T))
        return SweepRow(tau=tau, T=T, N=N, error_u=result.error_u,
                        error_y=result.error_y, cost_gap=result.cost_gap,
                        rho=rho, predicted_bound=bound, status="ok")
    except (ConfigError, GridError, SolverError) as exc:
        return SweepRow(tau=tau, T=T, N=None, error_u=None, error_y=None,
                        cost_gap=None, rho=None, predicted_bound=None,
                        status=f"skipped: {exc}")


def sweep(data: ProblemData, steady: SteadyState, care: CareSolution,
          tau_list: Sequence[float], T_list: Sequence[float], h: float,
          terminal: TerminalCostSpec, jobs: int = 1,
          N_override: Optional[int] = None):
    """Run the (tau, T) grid; returns rows in tau-major then T order.

    Cells with tau > T are omitted entirely (triangular layout); other
    infeasible cells produce a row whose status names the reason.  The
    result is independent of the worker count.
    """
    grid = Grid.span(0.0, data.T_bar, h)
    reference = solve_lq(SegmentProblem(data=data, y_init=data.y0,
                                        Qterm=data.Q, qterm=data.q, grid=grid))
    cells = [(float(tau), float(T)) for tau in tau_list for T in T_list
             if tau <= T + 1e-12]
    args = (data, steady, care, reference, terminal, h, N_override)
    if jobs <= 1:
        _init_worker(*args)
        return [_run_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                             initargs=args) as pool:
        return list(pool.map(_run_cell, cells))


def default_jobs() -> int:
    """Worker count from TURNPIKE_RHC_JOBS, defaulting to 1."""
    raw = os.environ.get("TURNPIKE_RHC_JOBS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
