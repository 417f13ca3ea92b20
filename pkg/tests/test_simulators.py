import numpy as np
import pytest

from flowstab import field_ops as fo
from flowstab import simulators as sim
from flowstab.field_ops import (StokesSaddle, lift_stokes, mass_vector,
                                reconstruct, stiffness_u, stiffness_v,
                                interior_u, interior_v, field_from_flat)
from flowstab.flow_models import ReferenceTrajectory, assemble_reduced
from flowstab.openloop import _rk4_interval
from flowstab.riccati import build_extended, solve_dre

from test_field_ops import random_solenoidal


def compatible_ic(model, x0, kc0, saddle=None):
    """Eigen mixture plus the solenoidal extension of the control trace."""
    grid = model.grid
    bd = model.basis.boundary_data(model.basis.kappa_full(kc0))
    ve = reconstruct(x0, model.stokes)
    if np.any(bd.normal_mid) or np.any(bd.tan_mid):
        s = saddle or StokesSaddle(grid)
        vl = lift_stokes(bd, s)
        return fo.FlowField(grid, ve.u + vl.u, ve.v + vl.v, bd)
    return fo.FlowField(grid, ve.u, ve.v, bd)


class TestReducedLoop:
    def test_zero_stays_zero(self, model16, gain16):
        run = sim.simulate_reduced_closedloop(
            model16, gain16, np.zeros(model16.N_gal), np.zeros(model16.n_perp), T=2.0)
        assert np.max(np.abs(run.X)) == 0.0
        assert np.max(np.abs(run.Kc)) == 0.0
        assert run.cost[-1] == 0.0

    def test_scalar_fixture_decay_rate(self):
        from flowstab.riccati import scalar_system, scalar_are_root
        lam, a = 1.0, 0.0
        gain = solve_dre(scalar_system(a, lam), T=14.0, dt_R=0.01)
        p = scalar_are_root(a, lam)

        # kappa' = -p kappa: closed-form exponential
        class _M:
            N_gal, n_perp, nu = 0, 1, 1.0

            class stokes:
                alpha = np.zeros(0)

            @staticmethod
            def rhs(t, x, kc):
                return np.zeros(0)

        run = sim.simulate_reduced_closedloop(_M, gain, np.zeros(0),
                                              np.array([1.0]), T=6.0)
        rate = run.fitted_decay_rate("ext", (0.5, 5.5))
        assert abs(rate - p) < 1e-3 * p

    def test_bookkeeping_exact(self, model16, gain16, rng):
        run = sim.simulate_reduced_closedloop(
            model16, gain16, rng.standard_normal(model16.N_gal),
            rng.standard_normal(model16.n_perp), T=3.0)
        assert run.bookkeeping_defect() < 1e-12

    def test_instability_detected(self, model16, gain16):
        with pytest.raises(RuntimeError, match="unstable"):
            sim.simulate_reduced_closedloop(
                model16, gain16, np.ones(model16.N_gal),
                np.ones(model16.n_perp), T=5.0, dt=1.9)  # absurd step

    def test_step_refinement_order(self, model16, gain16, rng):
        x0 = rng.standard_normal(model16.N_gal)
        k0 = rng.standard_normal(model16.n_perp)
        errs = []
        ref = sim.simulate_reduced_closedloop(model16, gain16, x0, k0, T=1.0, dt=1e-4)
        for dt in (4e-3, 2e-3):
            r = sim.simulate_reduced_closedloop(model16, gain16, x0, k0, T=1.0, dt=dt)
            errs.append(np.linalg.norm(r.X[-1] - ref.X[-1]))
        order = np.log2(errs[0] / errs[1])
        assert order >= 1.8


class TestFullLinear:
    def test_zero_run(self, model16, gain16, grid16):
        v0 = fo.FlowField.zero(grid16)
        run = sim.simulate_full_linear(model16, gain16, v0,
                                       np.zeros(model16.n_perp), T=0.5)
        assert np.max(run.norm_Piv) == 0.0
        assert np.max(run.norm_kappa) == 0.0

    def test_incompatible_trace_rejected(self, model16, gain16, grid16):
        v0 = fo.FlowField.zero(grid16)
        kc0 = np.ones(model16.n_perp)
        with pytest.raises(ValueError, match="incompatible initial trace"):
            sim.simulate_full_linear(model16, gain16, v0, kc0, T=0.5)

    def test_openloop_consistency_oracle(self, model16, grid16):
        # prescribed boundary coefficients; reduced trajectory is the oracle
        basis = model16.basis
        e1 = np.eye(basis.n_cols)[0]
        kfn = lambda t: np.sin(t) * e1
        x0 = np.zeros(model16.N_gal)
        x0[0], x0[1] = 1.0, -0.5
        v0 = reconstruct(x0, model16.stokes)
        run = sim.simulate_full_linear(model16, None, v0,
                                       np.zeros(model16.n_perp), T=6.0,
                                       lam=1.0, kappa_fn=kfn)
        ts, xs = _rk4_interval(model16, x0, 0.0, 6.0,
                               lambda t: basis.coords_of(kfn(t)), 1e-3)
        Xo = np.array([xs[np.searchsorted(ts, t)] for t in run.t])
        err = np.sqrt(np.trapezoid(np.sum((Xo - run.X) ** 2, axis=1), run.t))
        nrm = np.sqrt(np.trapezoid(np.sum(Xo ** 2, axis=1), run.t))
        assert err / nrm <= 0.05

    def test_closed_loop_matches_reduced_from_span_E(self, model16, gain16, rng):
        x0 = 0.5 * rng.standard_normal(model16.N_gal)
        kc0 = np.zeros(model16.n_perp)
        v0 = reconstruct(x0, model16.stokes)
        run = sim.simulate_full_linear(model16, gain16, v0, kc0, T=6.0)
        rred = sim.simulate_reduced_closedloop(model16, gain16, x0, kc0, T=6.0)
        idx = [np.searchsorted(rred.t, t) for t in run.t]
        Xr = rred.X[idx]
        err = np.sqrt(np.trapezoid(np.sum((Xr - run.X) ** 2, axis=1), run.t))
        nrm = np.sqrt(np.trapezoid(np.sum(Xr ** 2, axis=1), run.t))
        assert err / nrm <= 0.05

    def test_closed_loop_decay(self, model16, gain16, rng):
        x0 = rng.standard_normal(model16.N_gal)
        kc0 = rng.standard_normal(model16.n_perp)
        v0 = compatible_ic(model16, x0, kc0)
        run = sim.simulate_full_linear(model16, gain16, v0, kc0, T=8.0)
        assert run.fitted_decay_rate("piv", (1.0, 8.0)) >= 0.4

    def test_trace_record_follows_control(self, model16, gain16, rng):
        x0 = rng.standard_normal(model16.N_gal)
        kc0 = rng.standard_normal(model16.n_perp)
        v0 = compatible_ic(model16, x0, kc0)
        run = sim.simulate_full_linear(model16, gain16, v0, kc0, T=1.0,
                                       store_history=True)
        basis = model16.basis
        for k in (0, len(run.t) // 2, len(run.t) - 1):
            f = field_from_flat(model16.grid, run.history[k])
            prof = basis.normal_profile(basis.kappa_full(run.Kc[k]))
            assert np.max(np.abs(fo.extract_normal_trace(f) - prof)) < 1e-9

    def test_energy_identity_uncontrolled(self, model16, grid16, rng):
        v0 = random_solenoidal(grid16, rng)
        run = sim.simulate_full_linear(model16, None, v0,
                                       np.zeros(model16.n_perp), T=0.5,
                                       lam=1.0, store_history=True)
        Au, Av = stiffness_u(grid16), stiffness_v(grid16)
        mass = mass_vector(grid16)
        dt = run.meta["dt"]
        for k in range(len(run.t) - 1):
            n0 = float(run.history[k] @ (mass * run.history[k]))
            n1 = float(run.history[k + 1] @ (mass * run.history[k + 1]))
            vm = 0.5 * (run.history[k] + run.history[k + 1])
            f = field_from_flat(grid16, vm)
            ui, vi = interior_u(grid16, f.u), interior_v(grid16, f.v)
            grad_energy = float(ui @ (Au @ ui) + vi @ (Av @ vi))
            lhs = (n1 - n0) / dt
            rhs = -2.0 * model16.nu * grad_energy
            assert abs(lhs - rhs) <= 0.01 * abs(rhs)

    def test_step_refinement_order(self, model16, gain16, rng):
        x0 = 0.5 * rng.standard_normal(model16.N_gal)
        v0 = reconstruct(x0, model16.stokes)
        kc0 = np.zeros(model16.n_perp)
        ref = sim.simulate_full_linear(model16, gain16, v0, kc0, T=1.0, dt=2.5e-4)
        errs = []
        for dt in (4e-3, 2e-3):
            r = sim.simulate_full_linear(model16, gain16, v0, kc0, T=1.0, dt=dt)
            errs.append(np.linalg.norm(r.X[-1] - ref.X[-1]))
        order = np.log2(errs[0] / errs[1])
        assert order >= 0.9


class TestFullNonlinear:
    def test_zero_run(self, model16, gain16, grid16):
        run = sim.simulate_full_nonlinear(model16, gain16,
                                          fo.FlowField.zero(grid16),
                                          np.zeros(model16.n_perp), T=0.5)
        assert run.status == "ok"
        assert np.max(run.norm_h1) == 0.0

    def test_small_data_matches_linear_rate(self, model16, gain16, rng):
        x0 = rng.standard_normal(model16.N_gal)
        x0 *= 1e-3 / np.linalg.norm(x0)
        v0 = reconstruct(x0, model16.stokes)
        kc0 = np.zeros(model16.n_perp)
        rl = sim.simulate_full_linear(model16, gain16, v0, kc0, T=4.0)
        rn = sim.simulate_full_nonlinear(model16, gain16, v0, kc0, T=4.0)
        a = rl.fitted_decay_rate("h1", (0.5, 4.0))
        b = rn.fitted_decay_rate("h1", (0.5, 4.0))
        assert abs(a - b) <= 0.15 * a

    def test_blowup_recorded_not_raised(self, model16, gain16, rng):
        x0 = rng.standard_normal(model16.N_gal)
        x0 *= 5e4 / np.linalg.norm(x0)
        v0 = reconstruct(x0, model16.stokes)
        run = sim.simulate_full_nonlinear(model16, gain16, v0,
                                          np.zeros(model16.n_perp), T=2.0)
        assert run.status == "diverged"
        assert len(run.t) < int(2.0 / run.meta["dt"]) + 1


class TestPicard:
    def test_zero_history_reproduces_linear_run(self, model16, gain16, rng):
        x0 = 0.1 * rng.standard_normal(model16.N_gal)
        v0 = reconstruct(x0, model16.stokes)
        kc0 = np.zeros(model16.n_perp)
        lin = sim.simulate_full_linear(model16, gain16, v0, kc0, T=1.0,
                                       store_history=True)
        zero = sim.simulate_full_linear(model16, gain16,
                                        fo.FlowField.zero(model16.grid),
                                        np.zeros(model16.n_perp), T=1.0,
                                        store_history=True)
        out = sim.picard_map(zero, model16, gain16, v0, kc0, T=1.0)
        assert np.max(np.abs(out.history - lin.history)) == 0.0

    def test_contraction_and_fixed_point(self, model16, gain16, rng):
        x0 = rng.standard_normal(model16.N_gal)
        x0 *= 1e-3 / np.linalg.norm(x0)
        v0 = reconstruct(x0, model16.stokes)
        kc0 = np.zeros(model16.n_perp)
        T = 3.0
        rnl = sim.simulate_full_nonlinear(model16, gain16, v0, kc0, T=T,
                                          store_history=True)
        # contraction factor from two perturbed seeds
        s1 = sim.simulate_full_linear(model16, gain16, v0, kc0, T=T,
                                      store_history=True)
        s2 = sim.SimRun(**{**s1.__dict__})
        s2.history = s1.history * 1.1
        p1 = sim.picard_map(s1, model16, gain16, v0, kc0, T=T)
        p2 = sim.picard_map(s2, model16, gain16, v0, kc0, T=T)
        gamma = (sim.z_norm_diff(p1, p2, model16)
                 / sim.z_norm_diff(s1, s2, model16))
        assert gamma < 1.0
        fp, diffs = sim.picard_iterate(model16, gain16, v0, kc0, T=T, tol=1e-8)
        assert diffs[-1] <= 1e-8
        assert sim.z_norm_diff(fp, rnl, model16) <= 1e-6

    def test_missing_history_rejected(self, model16, gain16, grid16):
        run = sim.simulate_full_linear(model16, gain16, fo.FlowField.zero(grid16),
                                       np.zeros(model16.n_perp), T=0.5)
        with pytest.raises(ValueError, match="history"):
            sim.picard_map(run, model16, gain16, fo.FlowField.zero(grid16),
                           np.zeros(model16.n_perp), T=0.5)


class TestIntegralFeedback:
    def test_zero_run_zero_control(self, model16, gain16, grid16):
        run = sim.simulate_full_linear(model16, gain16, fo.FlowField.zero(grid16),
                                       np.zeros(model16.n_perp), T=0.5)
        out = sim.export_integral_feedback(run, model16.basis)
        assert np.max(np.abs(out["zeta_normal"])) == 0.0
        assert out["mismatch"] == 0.0

    def test_pointwise_equals_integral_form(self, model16, gain16, rng):
        x0 = rng.standard_normal(model16.N_gal)
        kc0 = rng.standard_normal(model16.n_perp)
        v0 = compatible_ic(model16, x0, kc0)
        run = sim.simulate_full_linear(model16, gain16, v0, kc0, T=2.0)
        out = sim.export_integral_feedback(run, model16.basis)
        assert out["mismatch"] <= 1e-8
        assert out["max_net_flux"] <= 1e-10

    def test_reduced_run_also_exact(self, model16, gain16, rng):
        run = sim.simulate_reduced_closedloop(
            model16, gain16, rng.standard_normal(model16.N_gal),
            rng.standard_normal(model16.n_perp), T=2.0)
        out = sim.export_integral_feedback(run, model16.basis)
        assert out["mismatch"] <= 1e-8
