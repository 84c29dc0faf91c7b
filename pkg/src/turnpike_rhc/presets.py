"""Built-in example problem.

A two-state, single-input system with an unstable open-loop mode, quadratic
output cost on both states, zero terminal weights, and a constant drift
that makes the steady state nonzero.  Closed-loop decay rate is about 0.36.
"""

import numpy as np

from .model import ProblemData


def default_problem() -> ProblemData:
    return ProblemData(
        A=np.array([[0.2, 0.0], [0.1, -0.5]]),
        B=np.array([[1.0], [1.0]]),
        C=np.eye(2),
        alpha=0.25,
        f_star=np.array([1.0, 1.0]),
        g_star=np.zeros(2),
        h_star=np.zeros(1),
        Q=np.zeros((2, 2)),
        q=np.zeros(2),
        y0=np.zeros(2),
        T_bar=30.0,
    )
