"""Independent oracles used by the test suite.

Each oracle reaches the quantity under test by a different route than the
implementation: dense linear algebra instead of the backward sweep, an
equality-constrained QP instead of the closed-loop construction, the matrix
exponential instead of time stepping, and central differences instead of
the adjoint.
"""

import numpy as np
import scipy.linalg as sla

MAX_DENSE_STEPS = 200


def dense_kkt_solution(seg):
    """Solve the discrete optimality system as one dense linear system.

    Unknowns are stacked as (y_1..y_K, u_1..u_K, p_0..p_K); every relation
    of the optimality system appears as one block row.  Limited to
    K <= MAX_DENSE_STEPS to bound memory.
    """
    data = seg.data
    K, h = seg.grid.K, seg.grid.h
    if K > MAX_DENSE_STEPS:
        raise ValueError(f"dense oracle limited to K <= {MAX_DENSE_STEPS}")
    n, m = data.n, data.m
    E = np.eye(n) - h * data.A
    CtC = data.C.T @ data.C
    size = n * K + m * K + n * (K + 1)
    M = np.zeros((size, size))
    rhs = np.zeros(size)

    def iy(k):  # y_k, k = 1..K
        return n * (k - 1)

    def iu(k):  # u_k, k = 1..K
        return n * K + m * (k - 1)

    def ip(k):  # p_k, k = 0..K
        return n * K + m * K + n * k

    row = 0
    for k in range(1, K + 1):  # state equation
        M[row:row + n, iy(k):iy(k) + n] = E
        if k > 1:
            M[row:row + n, iy(k - 1):iy(k - 1) + n] = -np.eye(n)
        M[row:row + n, iu(k):iu(k) + m] = -h * data.B
        rhs[row:row + n] = h * data.f_star + (seg.y_init if k == 1 else 0.0)
        row += n
    for k in range(1, K + 1):  # adjoint equation
        M[row:row + n, ip(k - 1):ip(k - 1) + n] = E.T
        M[row:row + n, ip(k):ip(k) + n] = -np.eye(n)
        M[row:row + n, iy(k):iy(k) + n] = -h * CtC
        rhs[row:row + n] = h * data.g_star
        row += n
    for k in range(1, K + 1):  # control relation
        M[row:row + m, iu(k):iu(k) + m] = data.alpha * np.eye(m)
        M[row:row + m, ip(k - 1):ip(k - 1) + n] = data.B.T
        rhs[row:row + m] = -data.h_star
        row += m
    M[row:row + n, ip(K):ip(K) + n] = np.eye(n)  # terminal condition
    M[row:row + n, iy(K):iy(K) + n] = -seg.Qterm
    rhs[row:row + n] = seg.qterm

    sol = np.linalg.solve(M, rhs)
    states = np.vstack([seg.y_init, sol[:n * K].reshape(K, n)])
    controls = sol[n * K:n * K + m * K].reshape(K, m)
    costates = sol[n * K + m * K:].reshape(K + 1, n)
    return states, controls, costates


def static_qp_solution(data):
    """Steady-state problem as a dense saddle-point solve in (y, u, p)."""
    n, m = data.n, data.m
    CtC = data.C.T @ data.C
    M = np.block([
        [data.A, data.B, np.zeros((n, n))],
        [-CtC, np.zeros((n, m)), -data.A.T],
        [np.zeros((m, n)), data.alpha * np.eye(m), data.B.T],
    ])
    rhs = np.concatenate([-data.f_star, data.g_star, -data.h_star])
    sol = np.linalg.solve(M, rhs)
    return sol[:n], sol[n:n + m], sol[n + m:]


def expm_states(A_cl, y0, times):
    """Exact flow samples of dy/dt = A_cl y from y0 at the given times."""
    return np.stack([sla.expm(A_cl * t) @ y0 for t in times])


def rollout(data, y_init, controls, grid):
    """Implicit-Euler rollout of a given control sequence."""
    E = np.eye(data.n) - grid.h * data.A
    Einv = np.linalg.inv(E)
    Y = np.empty((grid.K + 1, data.n))
    Y[0] = y_init
    for k in range(1, grid.K + 1):
        Y[k] = Einv @ (Y[k - 1] + grid.h * (data.B @ controls[k - 1] + data.f_star))
    return Y


def central_difference_gradient(func, x, step=1e-5):
    g = np.zeros_like(x, dtype=float)
    for i in range(x.size):
        e = np.zeros_like(x, dtype=float)
        e[i] = step
        g[i] = (func(x + e) - func(x - e)) / (2.0 * step)
    return g


def log_decay_rate(times, values):
    """OLS slope of log(values) against time, negated."""
    mask = values > 0
    coef = np.polyfit(times[mask], np.log(values[mask]), 1)
    return -coef[0]
