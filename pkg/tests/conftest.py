import numpy as np
import pytest

from turnpike_rhc import (
    Grid,
    ProblemData,
    SegmentProblem,
    default_problem,
    solve_care,
    solve_lq,
    solve_static,
)

H_DEFAULT = 5e-3


@pytest.fixture(scope="session")
def data():
    return default_problem()


@pytest.fixture(scope="session")
def care(data):
    return solve_care(data)


@pytest.fixture(scope="session")
def steady(data, care):
    return solve_static(data, care)


@pytest.fixture(scope="session")
def full_grid(data):
    return Grid.span(0.0, data.T_bar, H_DEFAULT)


@pytest.fixture(scope="session")
def reference(data, full_grid):
    """One-shot solution on [0, T_bar] under the problem's terminal pair."""
    return solve_lq(SegmentProblem(data=data, y_init=data.y0, Qterm=data.Q,
                                   qterm=data.q, grid=full_grid))


def random_problem(rng, n=2, m=1, T_bar=2.0):
    """Random well-posed instance: C = I keeps it detectable, and a dense B
    makes unstabilizable draws measure-zero."""
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, m))
    Qh = rng.standard_normal((n, n))
    return ProblemData(
        A=A,
        B=B,
        C=np.eye(n),
        alpha=float(rng.uniform(0.2, 2.0)),
        f_star=rng.standard_normal(n),
        g_star=rng.standard_normal(n),
        h_star=rng.standard_normal(m),
        Q=Qh.T @ Qh,
        q=rng.standard_normal(n),
        y0=rng.standard_normal(n),
        T_bar=T_bar,
    )
