import numpy as np
import pytest

from turnpike_rhc import (
    DimensionError,
    Grid,
    GridError,
    ProblemData,
    SegmentProblem,
    Trajectory,
    l2_distance,
    running_cost,
    solve_lq,
    total_cost,
    validate_problem,
)
from turnpike_rhc.model import steps_of
from turnpike_rhc.turnpike import _homogeneous

from conftest import H_DEFAULT


def scalar_problem(a=0.0, b=1.0, c=1.0, alpha=1.0, f=0.0, g=0.0, hl=0.0,
                   Q=0.0, q=0.0, y0=0.0, T_bar=1.0):
    return ProblemData(A=[[a]], B=[[b]], C=[[c]], alpha=alpha, f_star=[f],
                       g_star=[g], h_star=[hl], Q=[[Q]], q=[q], y0=[y0],
                       T_bar=T_bar)


class TestValidateProblem:
    def test_default_problem_ok(self, data):
        report = validate_problem(data)
        assert report.ok
        assert report.violations == ()

    def test_alpha_zero_is_flagged(self, data):
        bad = ProblemData(A=data.A, B=data.B, C=data.C, alpha=0.0,
                          f_star=data.f_star, g_star=data.g_star,
                          h_star=data.h_star, Q=data.Q, q=data.q, y0=data.y0,
                          T_bar=data.T_bar)
        report = validate_problem(bad)
        assert not report.ok
        assert "alpha > 0" in report.violations

    def test_unstabilizable_mode(self):
        bad = scalar_problem(a=1.0, b=0.0, c=1.0)
        report = validate_problem(bad)
        assert not report.ok
        assert "stabilizability" in report.violations

    def test_undetectable_mode(self):
        bad = scalar_problem(a=1.0, b=1.0, c=0.0)
        report = validate_problem(bad)
        assert "detectability" in report.violations

    def test_asymmetric_Q(self):
        bad = ProblemData(A=np.zeros((2, 2)) - np.eye(2), B=np.eye(2),
                          C=np.eye(2), alpha=1.0, f_star=[0, 0], g_star=[0, 0],
                          h_star=[0, 0], Q=[[0.0, 1.0], [0.0, 0.0]], q=[0, 0],
                          y0=[0, 0], T_bar=1.0)
        assert "Q symmetric" in validate_problem(bad).violations

    def test_indefinite_Q(self):
        bad = ProblemData(A=-np.eye(2), B=np.eye(2), C=np.eye(2), alpha=1.0,
                          f_star=[0, 0], g_star=[0, 0], h_star=[0, 0],
                          Q=[[-1.0, 0.0], [0.0, 1.0]], q=[0, 0], y0=[0, 0],
                          T_bar=1.0)
        assert "Q positive semi-definite" in validate_problem(bad).violations

    def test_dimension_mismatch_is_structural(self):
        with pytest.raises(DimensionError):
            ProblemData(A=np.eye(2), B=np.eye(3), C=np.eye(2), alpha=1.0,
                        f_star=[0, 0], g_star=[0, 0], h_star=[0, 0],
                        Q=np.zeros((2, 2)), q=[0, 0], y0=[0, 0], T_bar=1.0)


class TestRunningCost:
    def test_zero(self):
        d = scalar_problem()
        assert running_cost(d, np.zeros(1), np.zeros(1)) == 0.0

    def test_direct_formula(self):
        d = scalar_problem()
        assert running_cost(d, np.array([2.0]), np.array([1.0])) == pytest.approx(2.5)

    def test_linear_terms(self):
        d = scalar_problem(g=1.0, hl=-1.0)
        assert running_cost(d, np.array([1.0]), np.array([1.0])) == pytest.approx(1.0)

    def test_convexity(self):
        rng = np.random.default_rng(3)
        d = scalar_problem(g=0.3, hl=-0.2, alpha=0.7)
        for _ in range(50):
            ya, ua = rng.standard_normal(1), rng.standard_normal(1)
            yb, ub = rng.standard_normal(1), rng.standard_normal(1)
            mid = running_cost(d, 0.5 * (ya + yb), 0.5 * (ua + ub))
            avg = 0.5 * running_cost(d, ya, ua) + 0.5 * running_cost(d, yb, ub)
            assert mid <= avg + 1e-12


class TestTotalCost:
    def test_zero_trajectory(self):
        d = scalar_problem(T_bar=1.0)
        grid = Grid.span(0.0, 1.0, 0.1)
        traj = Trajectory(grid=grid, states=np.zeros((11, 1)),
                          controls=np.zeros((10, 1)))
        report = total_cost(d, traj, np.zeros((1, 1)), np.zeros(1))
        assert report.total == 0.0

    def test_constant_integrand_is_exact(self, data, steady):
        grid = Grid.span(0.0, data.T_bar, 0.01)
        traj = Trajectory(grid=grid,
                          states=np.tile(steady.y_star, (grid.K + 1, 1)),
                          controls=np.tile(steady.u_star, (grid.K, 1)))
        report = total_cost(data, traj, data.Q, data.q)
        expected = data.T_bar * steady.v_star
        assert report.running == pytest.approx(expected, rel=1e-12)
        assert report.total == pytest.approx(report.running + report.terminal, rel=1e-12)

    def test_value_decomposition_against_shifted_problem(self, data, steady,
                                                         reference, full_grid):
        # total cost of the optimal trajectory equals the homogeneous value
        # of the shifted problem plus the steady-state bookkeeping terms
        homog = _homogeneous(data)
        v0 = solve_lq(SegmentProblem(data=homog,
                                     y_init=data.y0 - steady.y_star,
                                     Qterm=data.Q, qterm=steady.q_tilde,
                                     grid=full_grid)).value
        rhs = (v0 + steady.p_star @ data.y0 + data.T_bar * steady.v_star
               + 0.5 * steady.y_star @ data.Q @ steady.y_star
               + (data.q - steady.p_star) @ steady.y_star)
        total = total_cost(data, reference.traj, data.Q, data.q).total
        assert total == pytest.approx(rhs, abs=1e-7)

    def test_additive_over_concatenation(self, data, reference, full_grid):
        K = full_grid.K
        for split in (1, K // 3, K // 2, K - 1):
            left = Grid(0.0, split * H_DEFAULT, H_DEFAULT, split)
            right = Grid(split * H_DEFAULT, data.T_bar, H_DEFAULT, K - split)
            tl = Trajectory(grid=left, states=reference.traj.states[:split + 1],
                            controls=reference.traj.controls[:split])
            tr = Trajectory(grid=right, states=reference.traj.states[split:],
                            controls=reference.traj.controls[split:])
            whole = total_cost(data, reference.traj, data.Q, data.q)
            a = total_cost(data, tl, np.zeros((2, 2)), np.zeros(2)).running
            b = total_cost(data, tr, data.Q, data.q)
            assert whole.total == pytest.approx(a + b.total, rel=1e-12)


class TestL2Distance:
    def test_identical(self):
        grid = Grid.span(0.0, 1.0, 0.1)
        a = np.ones((10, 1))
        assert l2_distance(a, a, grid) == 0.0

    def test_constant_difference(self):
        grid = Grid.span(0.0, 4.0, 0.05)
        a = np.full((grid.K, 1), 1.7)
        b = np.full((grid.K, 1), 0.7)
        assert l2_distance(a, b, grid) == pytest.approx(np.sqrt(4.0), rel=1e-12)

    def test_first_order_in_h_against_analytic_integral(self):
        # signal t on [0, 1]: exact squared norm 1/3; the rectangle-rule
        # error is ~h/2 and halves with h
        errs = []
        for h in (0.1, 0.05):
            grid = Grid.span(0.0, 1.0, h)
            a = grid.nodes()[1:].reshape(-1, 1)
            err = l2_distance(a, np.zeros_like(a), grid) ** 2 - 1.0 / 3.0
            errs.append(err)
        assert errs[0] / errs[1] == pytest.approx(2.0, abs=0.1)

    def test_node_sequences_drop_initial_sample(self):
        grid = Grid.span(0.0, 1.0, 0.1)
        a = np.zeros((11, 1))
        a[0] = 1e6  # excluded by the right-endpoint rule
        assert l2_distance(a, np.zeros((11, 1)), grid) == 0.0

    def test_shape_mismatch(self):
        grid = Grid.span(0.0, 1.0, 0.1)
        with pytest.raises(DimensionError):
            l2_distance(np.zeros((10, 1)), np.zeros((9, 1)), grid)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(11)
        grid = Grid.span(0.0, 1.0, 0.05)
        for _ in range(30):
            a, b, c = rng.standard_normal((3, grid.K, 2))
            ab = l2_distance(a, b, grid)
            bc = l2_distance(b, c, grid)
            ac = l2_distance(a, c, grid)
            assert ac <= ab + bc + 1e-12


class TestGridAndTrajectory:
    def test_grid_invariant(self):
        with pytest.raises(GridError):
            Grid(0.0, 1.0, 0.1, 9)

    def test_steps_of_rejects_misaligned_span(self):
        with pytest.raises(GridError):
            steps_of(1.03, 0.1, "tau")

    def test_trajectory_length_checks(self):
        grid = Grid.span(0.0, 1.0, 0.1)
        with pytest.raises(DimensionError):
            Trajectory(grid=grid, states=np.zeros((10, 1)), controls=np.zeros((10, 1)))
        with pytest.raises(DimensionError):
            Trajectory(grid=grid, states=np.zeros((11, 1)), controls=np.zeros((9, 1)))

    def test_immutability(self, data):
        with pytest.raises(ValueError):
            data.A[0, 0] = 7.0
