"""Problem definition, time grids, trajectories, costs, and discrete norms.

The continuous-time problem is

    minimize   int_0^Tbar l(y, u) dt  +  1/2 <y(Tbar), Q y(Tbar)> + <q, y(Tbar)>
    subject to dy/dt = A y + B u + f*,   y(0) = y0,

with running cost

    l(y, u) = 1/2 ||C y||^2 + <g*, y> + alpha/2 ||u||^2 + <h*, u>.

Discretization is implicit Euler with step h; states live at grid nodes
t_0..t_K, controls at right endpoints of the K intervals, and all integrals
use the right-endpoint rectangle rule so the discrete optimality system is
the exact KKT system of the discrete cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, GridError

# Tolerances used by the invariant checks.
SYM_TOL = 1e-12
PSD_TOL = 1e-10
HAUTUS_RTOL = 1e-9
GRID_RTOL = 1e-10


def _ro(a) -> np.ndarray:
    """Copy to a float array and mark it read-only."""
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ProblemData:
    """All matrices and vectors defining one problem instance.

    Attributes
    ----------
    A : (n, n) dynamics generator
    B : (n, m) input map
    C : (p, n) output map
    alpha : positive control weight
    f_star : (n,) constant drift
    g_star : (n,) linear state cost
    h_star : (m,) linear control cost
    Q : (n, n) terminal quadratic weight
    q : (n,) terminal linear weight
    y0 : (n,) initial state
    T_bar : horizon length
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    alpha: float
    f_star: np.ndarray
    g_star: np.ndarray
    h_star: np.ndarray
    Q: np.ndarray
    q: np.ndarray
    y0: np.ndarray
    T_bar: float

    def __post_init__(self):
        object.__setattr__(self, "A", _ro(np.atleast_2d(self.A)))
        object.__setattr__(self, "B", _ro(np.atleast_2d(self.B)))
        object.__setattr__(self, "C", _ro(np.atleast_2d(self.C)))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "f_star", _ro(np.atleast_1d(self.f_star)))
        object.__setattr__(self, "g_star", _ro(np.atleast_1d(self.g_star)))
        object.__setattr__(self, "h_star", _ro(np.atleast_1d(self.h_star)))
        object.__setattr__(self, "Q", _ro(np.atleast_2d(self.Q)))
        object.__setattr__(self, "q", _ro(np.atleast_1d(self.q)))
        object.__setattr__(self, "y0", _ro(np.atleast_1d(self.y0)))
        object.__setattr__(self, "T_bar", float(self.T_bar))
        self._check_dims()

    def _check_dims(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionError(f"A must be square, got {self.A.shape}")
        m = self.B.shape[1]
        if self.B.shape != (n, m):
            raise DimensionError(f"B must be {n}xm, got {self.B.shape}")
        if self.C.shape[1] != n:
            raise DimensionError(f"C must have {n} columns, got {self.C.shape}")
        if self.Q.shape != (n, n):
            raise DimensionError(f"Q must be {n}x{n}, got {self.Q.shape}")
        for name, vec, dim in (
            ("f_star", self.f_star, n),
            ("g_star", self.g_star, n),
            ("q", self.q, n),
            ("y0", self.y0, n),
            ("h_star", self.h_star, m),
        ):
            if vec.shape != (dim,):
                raise DimensionError(f"{name} must have length {dim}, got {vec.shape}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def dynamics_key(self) -> bytes:
        """Fingerprint of (A, B, C, alpha); identifies cacheable Riccati sweeps."""
        return b"".join(
            [self.A.tobytes(), self.B.tobytes(), self.C.tobytes(),
             np.float64(self.alpha).tobytes()]
        )

    def source_key(self) -> bytes:
        """Fingerprint of the affine sources (f*, g*, h*)."""
        return b"".join(
            [self.f_star.tobytes(), self.g_star.tobytes(), self.h_star.tobytes()]
        )


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate_problem: ok, or the list of violated invariants."""

    ok: bool
    violations: tuple = ()


def _hautus_holds(A: np.ndarray, B: np.ndarray, rtol: float = HAUTUS_RTOL) -> bool:
    """Hautus test: rank [mu I - A, B] = n at every eigenvalue mu with Re >= 0."""
    n = A.shape[0]
    for mu in np.linalg.eigvals(A):
        if mu.real < 0.0:
            continue
        M = np.hstack([mu * np.eye(n) - A, B.astype(complex)])
        sv = np.linalg.svd(M, compute_uv=False)
        if sv[-1] <= rtol * sv[0]:
            return False
    return True


def validate_problem(data: ProblemData) -> ValidationReport:
    """Check all ProblemData invariants and report each violation by name.

    Dimension mismatches are structural and raise at construction time; this
    function only reports invariant failures on well-formed data.
    """
    violations = []
    if not data.alpha > 0.0:
        violations.append("alpha > 0")
    if not data.T_bar > 0.0:
        violations.append("T_bar > 0")
    asym = np.abs(data.Q - data.Q.T).max() if data.Q.size else 0.0
    if asym > SYM_TOL:
        violations.append("Q symmetric")
    else:
        Qs = 0.5 * (data.Q + data.Q.T)
        if np.linalg.eigvalsh(Qs).min() < -PSD_TOL:
            violations.append("Q positive semi-definite")
    if not _hautus_holds(data.A, data.B):
        violations.append("stabilizability")
    if not _hautus_holds(data.A.T, data.C.T):
        violations.append("detectability")
    return ValidationReport(ok=not violations, violations=tuple(violations))


@dataclass(frozen=True)
class Grid:
    """Uniform time grid on [t0, t1] with K steps of size h."""

    t0: float
    t1: float
    h: float
    K: int

    def __post_init__(self):
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "t1", float(self.t1))
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "K", int(self.K))
        if self.h <= 0.0:
            raise GridError("h must be positive")
        if self.K <= 0:
            raise GridError("K must be positive")
        span = self.t1 - self.t0
        if abs(span - self.K * self.h) > GRID_RTOL * max(1.0, abs(span)):
            raise GridError(
                f"grid mismatch: |t1-t0-K*h| too large (t0={self.t0}, t1={self.t1}, "
                f"h={self.h}, K={self.K})"
            )

    @classmethod
    def span(cls, t0: float, t1: float, h: float) -> "Grid":
        """Build the grid on [t0, t1]; (t1-t0)/h must be an integer."""
        if h <= 0.0:
            raise GridError("h must be positive")
        K = int(round((t1 - t0) / h))
        return cls(t0, t1, h, K)

    def nodes(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.K + 1)


def steps_of(span: float, h: float, what: str = "span") -> int:
    """Number of steps covering `span` at step h; errors if not an integer."""
    K = int(round(span / h))
    if abs(span - K * h) > GRID_RTOL * max(1.0, abs(span)):
        raise GridError(f"{what} = {span} is not an integer multiple of h = {h}")
    return K


@dataclass(frozen=True)
class Trajectory:
    """States, controls, and optionally costates sampled on one grid.

    states has K+1 rows (all nodes), controls has K rows (right interval
    endpoints), costates — when present — has K+1 rows.
    """

    grid: Grid
    states: np.ndarray
    controls: np.ndarray
    costates: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "states", _ro(np.atleast_2d(self.states)))
        object.__setattr__(self, "controls", _ro(np.atleast_2d(self.controls)))
        if self.costates is not None:
            object.__setattr__(self, "costates", _ro(np.atleast_2d(self.costates)))
        K = self.grid.K
        if self.states.shape[0] != K + 1:
            raise DimensionError(f"states must have {K + 1} rows, got {self.states.shape[0]}")
        if self.controls.shape[0] != K:
            raise DimensionError(f"controls must have {K} rows, got {self.controls.shape[0]}")
        if self.costates is not None and self.costates.shape[0] != K + 1:
            raise DimensionError(f"costates must have {K + 1} rows, got {self.costates.shape[0]}")


@dataclass(frozen=True)
class CostReport:
    """Running, terminal, and total cost of one trajectory."""

    running: float
    terminal: float
    total: float


def running_cost(data: ProblemData, y: np.ndarray, u: np.ndarray) -> float:
    """Evaluate l(y, u) = 1/2 ||Cy||^2 + <g*, y> + alpha/2 ||u||^2 + <h*, u>."""
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    if y.shape != (data.n,) or u.shape != (data.m,):
        raise DimensionError(f"expected shapes ({data.n},), ({data.m},); "
                             f"got {y.shape}, {u.shape}")
    Cy = data.C @ y
    return float(0.5 * Cy @ Cy + data.g_star @ y
                 + 0.5 * data.alpha * (u @ u) + data.h_star @ u)


def _running_sum(data: ProblemData, states: np.ndarray, controls: np.ndarray,
                 h: float) -> float:
    # Right-endpoint rectangle rule: h * sum_{k=1..K} l(y_k, u_k).
    Y = states[1:]
    U = controls
    CY = Y @ data.C.T
    vals = (0.5 * np.einsum("ij,ij->i", CY, CY) + Y @ data.g_star
            + 0.5 * data.alpha * np.einsum("ij,ij->i", U, U) + U @ data.h_star)
    return float(h * vals.sum())


def total_cost(data: ProblemData, traj: Trajectory, Qterm: np.ndarray,
               qterm: np.ndarray) -> CostReport:
    """Discrete cost of a trajectory under terminal pair (Qterm, qterm)."""
    Qterm = np.atleast_2d(np.asarray(Qterm, dtype=float))
    qterm = np.atleast_1d(np.asarray(qterm, dtype=float))
    run = _running_sum(data, traj.states, traj.controls, traj.grid.h)
    yK = traj.states[-1]
    term = float(0.5 * yK @ Qterm @ yK + qterm @ yK)
    return CostReport(running=run, terminal=term, total=run + term)


def l2_distance(a: np.ndarray, b: np.ndarray, grid: Grid) -> float:
    """Discrete L2 distance (h * sum ||a_k - b_k||^2)^(1/2) on one grid.

    Accepts sequences of K rows (interval samples) or K+1 rows (node samples);
    for node samples the t0 row is excluded, matching the right-endpoint rule.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.shape[0] == grid.K + 1:
        a, b = a[1:], b[1:]
    elif a.shape[0] != grid.K:
        raise DimensionError(f"expected {grid.K} or {grid.K + 1} rows, got {a.shape[0]}")
    d = a - b
    return float(np.sqrt(grid.h * np.einsum("ij,ij->i", d, d).sum()))
