import numpy as np
import pytest

from flowstab import riccati as rc
from flowstab.simulators import simulate_reduced_closedloop


class TestScalarOracle:
    @pytest.mark.parametrize("a", [-0.5, 0.0, 0.7])
    def test_converged_kernel_matches_closed_form(self, a):
        lam = 1.0
        sys = rc.scalar_system(a, lam)
        gain = rc.solve_dre(sys, T=14.0, dt_R=0.01)
        p = gain.R_tab[0][0, 0]
        assert abs(p - rc.scalar_are_root(a, lam)) < 1e-8

    def test_feedback_is_minus_p(self):
        lam, a = 1.0, 0.0
        gain = rc.solve_dre(rc.scalar_system(a, lam), T=14.0, dt_R=0.01)
        p = rc.scalar_are_root(a, lam)
        got = gain.feedback(0.0, np.zeros(0), np.array([2.0]))
        assert abs(got[0] + 2.0 * p) < 1e-7


class TestSweep:
    def test_zero_horizon_zero_gain(self):
        gain = rc.solve_dre(rc.scalar_system(0.3, 1.0), T=0.0)
        assert np.all(gain.R_tab == 0.0)

    def test_symmetry_and_psd(self, model16, gain16):
        assert gain16.symmetry_defect() <= 1e-10
        assert gain16.min_eigenvalue() >= -1e-10

    def test_fd_residual(self, model16, gain16):
        sys = rc.build_extended(model16, 1.0)
        nrm = max(np.linalg.norm(R) for R in gain16.R_tab)
        assert gain16.fd_residual(sys) <= 1e-6 * (1.0 + nrm)

    def test_horizon_insensitivity(self, model16):
        sys = rc.build_extended(model16, 1.0)
        assert rc.horizon_insensitivity(sys, T=12.0, dt_R=0.012) <= 1e-6

    def test_nonsymmetric_terminal_rejected(self, model16):
        sys = rc.build_extended(model16, 1.0)
        bad = np.zeros((sys.n, sys.n))
        bad[0, 1] = 1.0
        with pytest.raises(ValueError, match="symmetric"):
            rc.solve_dre(sys, T=1.0, terminal=bad)

    def test_blowup_detected(self):
        # unstable dynamics with zero control authority: the backward sweep
        # accumulates the state cost exponentially and must be rejected
        sys = rc.ExtendedSystem(n_x=0, n_k=1, lam=1.0,
                                A_of_t=lambda t: np.array([[-50.0]]),
                                B=np.zeros((1, 1)), C=np.eye(1))
        with pytest.raises(RuntimeError, match="non-stabilizable"):
            rc.solve_dre(sys, T=4.0, dt_R=0.004)


class TestExtendedBlocks:
    def test_lambda_shift(self, model16):
        s1 = rc.build_extended(model16, 1.0)
        s2 = rc.build_extended(model16, 2.0)
        d = s2.A_of_t(0.0) - s1.A_of_t(0.0)
        assert np.allclose(d, -0.5 * np.eye(s1.n), atol=1e-14)

    def test_input_block_rank_and_projection(self, model16):
        sys = rc.build_extended(model16, 1.0)
        assert np.linalg.matrix_rank(sys.B) == model16.n_perp
        assert np.allclose(sys.B @ sys.B, sys.B, atol=1e-14)
        assert np.allclose(sys.B, sys.B.T, atol=1e-14)

    def test_bottom_rows_have_no_drift(self, model16):
        sys = rc.build_extended(model16, 1.0)
        A = sys.A_of_t(0.0) + 0.5 * 1.0 * np.eye(sys.n)
        assert np.all(A[model16.N_gal:, :] == 0.0)

    def test_nonpositive_lambda_rejected(self, model16):
        with pytest.raises(ValueError, match="positive"):
            rc.build_extended(model16, 0.0)


class TestValueFunction:
    def test_zero_state(self, gain16):
        assert gain16.value(0.3, np.zeros(gain16.n_x), np.zeros(gain16.n_k)) == 0.0

    def test_homogeneity(self, gain16, rng):
        x = rng.standard_normal(gain16.n_x)
        k = rng.standard_normal(gain16.n_k)
        v1 = gain16.value(0.2, x, k)
        v2 = gain16.value(0.2, 2 * x, 2 * k)
        assert abs(v2 - 4 * v1) < 1e-10 * abs(v1)

    def test_matches_simulated_cost_to_go(self, model16, gain16, rng):
        x0 = 0.3 * rng.standard_normal(gain16.n_x)
        k0 = 0.3 * rng.standard_normal(gain16.n_k)
        run = simulate_reduced_closedloop(model16, gain16, x0, k0, T=12.0)
        predicted = gain16.value(0.0, x0, k0)
        assert abs(run.cost[-1] - predicted) < 0.01 * predicted

    def test_dynamic_programming_split(self, model16, gain16, rng):
        x0 = 0.5 * rng.standard_normal(gain16.n_x)
        k0 = 0.5 * rng.standard_normal(gain16.n_k)
        run = simulate_reduced_closedloop(model16, gain16, x0, k0, T=12.0)
        total = gain16.value(0.0, x0, k0)
        for s in (1.0, 2.0, 4.0, 6.0, 8.0):
            k = int(round(s / run.meta["dt"]))
            split = run.cost[k] + gain16.value(run.t[k], run.X[k], run.Kc[k])
            assert abs(split - total) < 0.01 * total


class TestFeedback:
    def test_zero_gives_zero(self, gain16):
        out = gain16.feedback(0.1, np.zeros(gain16.n_x), np.zeros(gain16.n_k))
        assert np.all(out == 0.0)

    def test_linearity(self, gain16, rng):
        x1, x2 = rng.standard_normal((2, gain16.n_x))
        k1, k2 = rng.standard_normal((2, gain16.n_k))
        lhs = gain16.feedback(0.5, x1 + x2, k1 + k2)
        rhs = gain16.feedback(0.5, x1, k1) + gain16.feedback(0.5, x2, k2)
        assert np.max(np.abs(lhs - rhs)) < 1e-12 * max(np.max(np.abs(lhs)), 1.0)

    def test_dimension_mismatch(self, gain16):
        with pytest.raises(ValueError, match="dimensions"):
            gain16.feedback(0.0, np.zeros(gain16.n_x + 1), np.zeros(gain16.n_k))

    def test_norm_bound_reported(self, gain16):
        assert gain16.feedback_norm_bound() > 0


class TestLyapunov:
    def test_zero_trajectory(self, gain16):
        t = np.linspace(0, 1, 11)
        Z = np.zeros((11, gain16.n_x))
        K = np.zeros((11, gain16.n_k))
        assert np.all(rc.lyapunov_psi(gain16, t, Z, K) == 0.0)
        assert np.all(rc.lyapunov_phi(t, Z, K) == 0.0)

    def test_monotone_along_closed_loop(self, model16, gain16, rng):
        x0 = rng.standard_normal(gain16.n_x)
        k0 = rng.standard_normal(gain16.n_k)
        run = simulate_reduced_closedloop(model16, gain16, x0, k0, T=10.0)
        psi = rc.lyapunov_psi(gain16, run.t, run.X, run.Kc)
        slope = (psi[2:] - psi[:-2]) / (run.t[2:] - run.t[:-2])
        assert np.max(slope) <= 1e-8
        phi = rc.lyapunov_phi(run.t, run.X, run.Kc)
        assert np.max(np.diff(phi)) <= 1e-12

    def test_short_trajectory_rejected(self, gain16):
        with pytest.raises(ValueError, match="too short"):
            rc.lyapunov_phi(np.array([0.0, 1.0]), np.zeros((2, gain16.n_x)),
                            np.zeros((2, gain16.n_k)))


def test_reduced_closed_loop_decay(model16, gain16, rng):
    x0 = rng.standard_normal(gain16.n_x)
    k0 = rng.standard_normal(gain16.n_k)
    run = simulate_reduced_closedloop(model16, gain16, x0, k0, T=10.0)
    assert run.fitted_decay_rate("ext", (1.0, 10.0)) >= 0.45
