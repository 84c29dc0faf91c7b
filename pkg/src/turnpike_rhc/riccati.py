"""Algebraic Riccati equation, closed-loop operator, and backward flows.

solve_care computes the stabilizing solution Pi of

    A'Pi + Pi A + C'C - (1/alpha) Pi B B' Pi = 0

via the ordered real Schur form of the 2n x 2n Hamiltonian, refined by
Newton-Kleinman iterations (Lyapunov solves) until the residual is at
machine level.  The closed-loop matrix is A_pi = A - (1/alpha) B B' Pi and
the decay rate is the negated spectral abscissa of A_pi.

riccati_flow computes the finite-horizon operators: with j steps to go,
P_seq[j] maps the state and G_seq[j] maps the terminal linear weight to the
initial costate of the homogeneous discrete optimality system.  The
recursion is the backward elimination step of the implicit-Euler KKT
system, so it matches the segment solver exactly:

    W     = P_seq[j-1] + h C'C
    Gam_j = (E' + W E^{-1} beta)^{-1},     E = I - hA,  beta = (h/alpha) BB'
    P_seq[j] = Gam_j W E^{-1}              (symmetrized)
    G_seq[j] = Gam_j G_seq[j-1]

Because the recursion is the exact one-step map of the discretization, its
fixed point is the discrete-time stationary solution (a DARE solution),
which differs from the continuous Pi by O(h); stationary_flow_matrix
exposes it.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import GridError, RiccatiError
from .model import ProblemData, steps_of

CARE_TARGET = 1e-10
NEWTON_MAX_ITER = 30
# Hamiltonian eigenvalues closer to the imaginary axis than this (relative to
# the spectral radius) indicate a non-stabilizable/undetectable problem.
AXIS_TOL = 1e-9


@dataclass(frozen=True)
class CareSolution:
    """Stabilizing Riccati solution with closed-loop data.

    Attributes
    ----------
    Pi : (n, n) stabilizing PSD solution
    A_pi : (n, n) closed-loop matrix A - (1/alpha) B B' Pi
    lam : decay rate, the negated spectral abscissa of A_pi
    gain : (m, n) feedback gain (1/alpha) B' Pi
    """

    Pi: np.ndarray
    A_pi: np.ndarray
    lam: float
    gain: np.ndarray


def care_residual(data: ProblemData, P: np.ndarray) -> float:
    """Frobenius norm of the continuous Riccati residual at P."""
    R = (data.A.T @ P + P @ data.A + data.C.T @ data.C
         - (1.0 / data.alpha) * P @ data.B @ data.B.T @ P)
    return float(np.linalg.norm(R, "fro"))


def solve_care(data: ProblemData) -> CareSolution:
    """Solve the continuous algebraic Riccati equation.

    Raises RiccatiError when no stabilizing solution exists (Hamiltonian
    eigenvalues on the imaginary axis, or unstable invariant subspace not of
    dimension n).
    """
    n = data.n
    BBt = data.B @ data.B.T / data.alpha
    H = np.block([[data.A, -BBt], [-data.C.T @ data.C, -data.A.T]])

    eigs = np.linalg.eigvals(H)
    scale = max(np.abs(eigs).max(), 1.0)
    if np.min(np.abs(eigs.real)) <= AXIS_TOL * scale:
        raise RiccatiError("Hamiltonian has eigenvalues on the imaginary axis; "
                           "no stabilizing solution")

    _, Z, sdim = sla.schur(H, output="real", sort=lambda re, im: re < 0.0)
    if sdim != n:
        raise RiccatiError(f"stable invariant subspace has dimension {sdim}, expected {n}")
    U1 = Z[:n, :n]
    U2 = Z[n:, :n]
    try:
        P = U2 @ np.linalg.inv(U1)
    except np.linalg.LinAlgError as exc:
        raise RiccatiError("stable subspace is not a graph over the state space") from exc
    P = 0.5 * (P + P.T)

    # Newton-Kleinman refinement: Lyapunov solves seeded with the Schur result.
    res = care_residual(data, P)
    for _ in range(NEWTON_MAX_ITER):
        if res <= CARE_TARGET:
            break
        A_cl = data.A - BBt @ P
        rhs = -(data.C.T @ data.C) - P @ BBt @ P
        P = sla.solve_continuous_lyapunov(A_cl.T, rhs)
        P = 0.5 * (P + P.T)
        new_res = care_residual(data, P)
        if new_res >= res:
            break
        res = new_res
    if res > CARE_TARGET:
        raise RiccatiError(f"Riccati residual {res:.3e} above target {CARE_TARGET:.0e}")

    A_pi = data.A - BBt @ P
    lam = -float(np.linalg.eigvals(A_pi).real.max())
    if lam <= 0.0:
        raise RiccatiError("closed-loop matrix is not Hurwitz")
    return CareSolution(Pi=P, A_pi=A_pi, lam=lam, gain=(1.0 / data.alpha) * data.B.T @ P)


def decay_rate(care: CareSolution) -> float:
    """Negated spectral abscissa of the closed-loop matrix."""
    lam = -float(np.linalg.eigvals(care.A_pi).real.max())
    if lam <= 0.0:
        raise RiccatiError("nonpositive decay rate: upstream CARE solve failed")
    return lam


@dataclass(frozen=True)
class StepMatrices:
    """Per-(dynamics, h) constants of the implicit-Euler one-step maps."""

    h: float
    E: np.ndarray
    Einv: np.ndarray
    beta: np.ndarray
    Qbar: np.ndarray
    B: np.ndarray
    alpha: float


def step_matrices(data: ProblemData, h: float) -> StepMatrices:
    E = np.eye(data.n) - h * data.A
    return StepMatrices(
        h=h,
        E=E,
        Einv=np.linalg.inv(E),
        beta=(h / data.alpha) * (data.B @ data.B.T),
        Qbar=h * data.C.T @ data.C,
        B=data.B,
        alpha=data.alpha,
    )


def flow_step(P: np.ndarray, sm: StepMatrices):
    """One backward step: returns (P with one more step to go, Gam)."""
    W = P + sm.Qbar
    X = W @ sm.Einv
    Gam = np.linalg.inv(sm.E.T + X @ sm.beta)
    P_new = Gam @ X
    return 0.5 * (P_new + P_new.T), Gam


class _FlowTable:
    """Growing (P, Gam, G) table for one (dynamics, h, Q_T); prefix-reusable."""

    def __init__(self, Q_T: np.ndarray, sm: StepMatrices):
        self.sm = sm
        self.P = [0.5 * (Q_T + Q_T.T)]
        self.Gam = [None]
        self.G = [np.eye(Q_T.shape[0])]
        self.lock = threading.Lock()

    def extend(self, K: int):
        with self.lock:
            while len(self.P) <= K:
                P_new, Gam = flow_step(self.P[-1], self.sm)
                self.P.append(P_new)
                self.Gam.append(Gam)
                self.G.append(Gam @ self.G[-1])


_flow_tables: dict = {}
_tables_lock = threading.Lock()


def _flow_table(data: ProblemData, Q_T: np.ndarray, h: float) -> _FlowTable:
    key = (data.dynamics_key(), np.float64(h).tobytes(),
           np.ascontiguousarray(Q_T, dtype=float).tobytes())
    with _tables_lock:
        table = _flow_tables.get(key)
        if table is None:
            table = _FlowTable(np.asarray(Q_T, dtype=float), step_matrices(data, h))
            _flow_tables[key] = table
    return table


def clear_flow_cache():
    with _tables_lock:
        _flow_tables.clear()


@dataclass(frozen=True)
class RiccatiFlow:
    """Backward flow samples: P_seq[k] and G_seq[k] at time-to-go k*h."""

    Q_T: np.ndarray
    h: float
    P_seq: tuple
    G_seq: tuple

    def pi_at(self, time_to_go: float) -> np.ndarray:
        """P at a time-to-go that must be a grid multiple."""
        j = steps_of(time_to_go, self.h, "time-to-go")
        return self.P_seq[j]

    def g_at(self, time_to_go: float) -> np.ndarray:
        j = steps_of(time_to_go, self.h, "time-to-go")
        return self.G_seq[j]


def riccati_flow(care: CareSolution, data: ProblemData, Q_T: np.ndarray,
                 T: float, h: float) -> RiccatiFlow:
    """Backward flow of the finite-horizon operators on [0, T].

    The `care` argument is accepted for interface symmetry with the other
    drivers; the flow itself depends only on (A, B, C, alpha, h, Q_T).
    Results are cached per (dynamics, h, Q_T) and extended on demand, so
    repeated calls with identical sub-horizons reuse one sweep.
    """
    del care
    Q_T = np.atleast_2d(np.asarray(Q_T, dtype=float))
    if np.abs(Q_T - Q_T.T).max() > 1e-10:
        raise RiccatiError("Q_T must be symmetric")
    K = steps_of(T, h, "T") if T > 0 else 0
    if K < 0:
        raise GridError("T must be nonnegative")
    table = _flow_table(data, Q_T, h)
    table.extend(K)
    return RiccatiFlow(Q_T=Q_T, h=h, P_seq=tuple(table.P[:K + 1]),
                       G_seq=tuple(table.G[:K + 1]))


def stationary_flow_matrix(data: ProblemData, h: float) -> np.ndarray:
    """Fixed point of the backward flow (infinite steps to go).

    Equals the stabilizing solution of the discrete-time Riccati equation of
    the implicit-Euler transcription, shifted by the stage weight; it differs
    from the continuous Pi by O(h).
    """
    sm = step_matrices(data, h)
    Ad = sm.Einv
    Bd = h * sm.Einv @ data.B
    S = sla.solve_discrete_are(Ad, Bd, sm.Qbar, h * data.alpha * np.eye(data.m))
    P = S - sm.Qbar
    return 0.5 * (P + P.T)
