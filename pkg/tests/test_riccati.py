import numpy as np
import pytest
import scipy.linalg as sla

from turnpike_rhc import (
    GridError,
    RiccatiError,
    SegmentProblem,
    decay_rate,
    riccati_flow,
    solve_care,
    solve_lq,
    stationary_flow_matrix,
)
from turnpike_rhc.riccati import care_residual
from turnpike_rhc.turnpike import _homogeneous

from conftest import H_DEFAULT, random_problem
from oracles import expm_states, log_decay_rate
from test_model import scalar_problem


class TestSolveCare:
    def test_scalar_integrator(self):
        care = solve_care(scalar_problem(a=0.0, b=1.0, c=1.0, alpha=1.0))
        assert care.Pi[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert care.A_pi[0, 0] == pytest.approx(-1.0, abs=1e-12)
        assert care.lam == pytest.approx(1.0, abs=1e-12)

    def test_scalar_lyapunov_case(self):
        care = solve_care(scalar_problem(a=-1.0, b=0.0, c=1.0, alpha=1.0))
        assert care.Pi[0, 0] == pytest.approx(0.5, abs=1e-12)
        assert care.lam == pytest.approx(1.0, abs=1e-12)

    def test_default_problem_decay_rate(self, data, care):
        assert abs(care.lam - 0.36) <= 0.01
        assert care_residual(data, care.Pi) <= 1e-10

    def test_matches_scipy_are(self, data, care):
        ref = sla.solve_continuous_are(data.A, data.B, data.C.T @ data.C,
                                       data.alpha * np.eye(data.m))
        assert np.abs(care.Pi - ref).max() <= 1e-10

    def test_solution_invariants(self, data, care):
        assert np.abs(care.Pi - care.Pi.T).max() <= 1e-10
        assert np.linalg.eigvalsh(care.Pi).min() >= -1e-10
        assert np.linalg.eigvals(care.A_pi).real.max() <= -care.lam + 1e-9
        assert np.abs(care.gain - data.B.T @ care.Pi / data.alpha).max() <= 1e-12

    def test_imaginary_axis_failure(self):
        with pytest.raises(RiccatiError):
            solve_care(scalar_problem(a=0.0, b=0.0, c=1.0))


class TestDecayRate:
    def test_lyapunov_example(self):
        care = solve_care(scalar_problem(a=-2.0, b=0.0, c=1.0, alpha=1.0))
        assert care.Pi[0, 0] == pytest.approx(0.25, abs=1e-12)
        assert decay_rate(care) == pytest.approx(2.0, abs=1e-12)

    def test_integrator_example(self):
        care = solve_care(scalar_problem(a=0.0, b=1.0, c=1.0, alpha=1.0))
        assert decay_rate(care) == pytest.approx(1.0, abs=1e-12)

    def test_matches_matrix_exponential_decay(self, care):
        rng = np.random.default_rng(7)
        lam = decay_rate(care)
        times = np.linspace(1.0 / lam, 10.0 / lam, 60)
        for _ in range(3):
            y0 = rng.standard_normal(2)
            norms = np.linalg.norm(expm_states(care.A_pi, y0, times), axis=1)
            fitted = log_decay_rate(times, norms)
            assert fitted == pytest.approx(lam, rel=0.05)


class TestRiccatiFlow:
    def test_zero_steps(self, data, care):
        flow = riccati_flow(care, data, np.eye(2), 0.0, H_DEFAULT)
        assert np.array_equal(flow.P_seq[0], np.eye(2))
        assert np.array_equal(flow.G_seq[0], np.eye(2))
        assert len(flow.P_seq) == 1

    def test_misaligned_horizon(self, data, care):
        with pytest.raises(GridError):
            riccati_flow(care, data, np.zeros((2, 2)), 0.0123, H_DEFAULT)

    def test_stationary_matrix_is_fixed_point(self, data, care):
        P_inf = stationary_flow_matrix(data, H_DEFAULT)
        flow = riccati_flow(care, data, P_inf, 10.0, H_DEFAULT)
        drift = max(np.abs(P - P_inf).max() for P in flow.P_seq)
        assert drift <= 1e-8

    def test_stationary_matrix_near_continuous_solution(self, data, care):
        # the discrete fixed point differs from the continuous solution at O(h)
        P_inf = stationary_flow_matrix(data, H_DEFAULT)
        gap = np.linalg.norm(P_inf - care.Pi, 2)
        assert 1e-4 < gap < 0.1 * np.linalg.norm(care.Pi, 2)

    def test_decay_rates_from_zero_weight(self, data, care):
        flow = riccati_flow(care, data, np.zeros((2, 2)), 10.0, H_DEFAULT)
        P_inf = stationary_flow_matrix(data, H_DEFAULT)
        k = np.arange(len(flow.P_seq))
        t = k * H_DEFAULT
        mask = (t >= 2.0) & (t <= 10.0)
        dP = np.array([np.linalg.norm(P - P_inf, 2) for P in flow.P_seq])
        nG = np.array([np.linalg.norm(G, 2) for G in flow.G_seq])
        assert log_decay_rate(t[mask], dP[mask]) >= 1.8 * care.lam
        assert log_decay_rate(t[mask], nG[mask]) >= 0.9 * care.lam

    def test_flow_gives_initial_costate(self, data, care):
        # P_seq[K] y0 + G_seq[K] q reproduces p(0) of the homogeneous solve
        rng = np.random.default_rng(5)
        homog = _homogeneous(data)
        from turnpike_rhc import Grid
        grid = Grid.span(0.0, 1.5, H_DEFAULT)
        for _ in range(3):
            Qr = rng.standard_normal((2, 2))
            Qr = Qr.T @ Qr
            qr = rng.standard_normal(2)
            y0 = rng.standard_normal(2)
            sol = solve_lq(SegmentProblem(data=homog, y_init=y0, Qterm=Qr,
                                          qterm=qr, grid=grid))
            flow = riccati_flow(care, data, Qr, 1.5, H_DEFAULT)
            p0 = flow.P_seq[grid.K] @ y0 + flow.G_seq[grid.K] @ qr
            assert np.abs(p0 - sol.traj.costates[0]).max() <= 1e-10

    def test_samples_symmetric_psd(self, data, care):
        rng = np.random.default_rng(9)
        for _ in range(3):
            Qr = rng.standard_normal((2, 2))
            Qr = Qr.T @ Qr
            flow = riccati_flow(care, data, Qr, 3.0, H_DEFAULT)
            for P in flow.P_seq[::100]:
                assert np.abs(P - P.T).max() <= 1e-9
                assert np.linalg.eigvalsh(P).min() >= -1e-10

    def test_distance_to_limit_nonincreasing(self, data, care):
        rng = np.random.default_rng(13)
        P_inf = stationary_flow_matrix(data, H_DEFAULT)
        start = int(np.ceil(1.0 / care.lam / H_DEFAULT))
        for _ in range(3):
            Qr = rng.standard_normal((2, 2))
            Qr = Qr.T @ Qr
            flow = riccati_flow(care, data, Qr, 8.0, H_DEFAULT)
            d = np.array([np.linalg.norm(P - P_inf, 2) for P in flow.P_seq])
            tail = d[start:]
            assert np.all(tail[1:] <= 1.1 * tail[:-1] + 1e-14)

    def test_first_order_in_h(self, data, care):
        # error against a quarter-step reference at each h: first order means
        # the two errors are in ratio ~2
        T = 1.0

        def P_at(h):
            return riccati_flow(care, data, np.zeros((2, 2)), T, h).P_seq[-1]

        err_h = np.linalg.norm(P_at(0.02) - P_at(0.005), 2)
        err_h2 = np.linalg.norm(P_at(0.01) - P_at(0.0025), 2)
        assert err_h / err_h2 == pytest.approx(2.0, abs=0.5)

    def test_cache_reuses_prefix(self, data, care):
        f1 = riccati_flow(care, data, np.zeros((2, 2)), 2.0, H_DEFAULT)
        f2 = riccati_flow(care, data, np.zeros((2, 2)), 1.0, H_DEFAULT)
        assert f2.P_seq == f1.P_seq[:len(f2.P_seq)]

    def test_random_systems_converge_to_stationary(self):
        rng = np.random.default_rng(17)
        for _ in range(3):
            d = random_problem(rng)
            care = solve_care(d)
            h = 0.01
            P_inf = stationary_flow_matrix(d, h)
            T = np.ceil(max(2.0, 12.0 / care.lam) / h) * h
            flow = riccati_flow(care, d, d.Q, T, h)
            assert np.linalg.norm(flow.P_seq[-1] - P_inf, 2) <= 1e-6 * (
                1.0 + np.linalg.norm(P_inf, 2))
