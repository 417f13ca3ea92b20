import numpy as np
import pytest

from flowstab.geometry import build_domain, build_cutoff, make_patch
from flowstab.control_basis import (build_xi, compute_nullspace,
                                    min_singular_on_perp, z_of_normal_trace)
from flowstab.field_ops import FlowField


def appendix_basis(n_bottom):
    """Two selected normal modes whose cutoff corrections collide.

    The cutoff is the indicator of the middle third of a pi-long wall times
    the combination 3*sin(3r) - sin(9r) of the two selected modes, which makes
    one exact linear dependency among the corrected normal columns.
    """
    grid = build_domain(np.pi, 1.0, n_bottom, 8)
    a, b = np.pi / 3.0, 2.0 * np.pi / 3.0
    amp = np.sqrt(2.0 / np.pi)

    def chi(r):
        if r <= a or r >= b:
            return 0.0
        return amp * (3.0 * np.sin(3.0 * r) - np.sin(9.0 * r))

    patch = make_patch(grid, "bottom", a_c=a, b_c=b, a_O=0.0, b_O=np.pi,
                       chi=chi, eps_chi=1e-8)
    return build_xi(2, patch, grid, mode_indices=[3, 9])


class TestXiColumns:
    def test_zero_average_for_random_coefficients(self, basis16, rng):
        for _ in range(20):
            z = rng.standard_normal(basis16.n_cols)
            assert abs(basis16.net_flux_of(z)) < 1e-10

    def test_tangential_column_has_no_normal_part(self, basis16):
        e = np.zeros(basis16.n_cols)
        e[basis16.M] = 1.0  # first tangential coefficient
        assert np.all(basis16.normal_profile(e) == 0.0)

    def test_normal_column_has_no_tangential_part(self, basis16):
        e = np.zeros(basis16.n_cols)
        e[0] = 1.0
        assert np.all(basis16.tangential_profile(e) == 0.0)

    def test_columns_vanish_outside_cutoff_support(self, basis16, grid16):
        w = grid16.wall("bottom")
        outside = np.abs(basis16.patch.chi_mid) == 0.0
        block = basis16.Xi[np.arange(grid16.n_bnd)[w.gslice]]
        assert np.all(block[outside] == 0.0)
        off_wall = np.ones(grid16.n_bnd, dtype=bool)
        off_wall[w.gslice] = False
        assert np.all(basis16.Xi[:grid16.n_bnd][off_wall] == 0.0)

    def test_first_column_against_quadrature_oracle(self, grid16, patch16):
        # independent quadrature for the cutoff-correction coefficient
        basis = build_xi(2, patch16, grid16)
        w = grid16.wall("bottom")
        mids, h = w.mids, w.h
        chi = patch16.chi_mid
        L = patch16.o_length
        prof = np.where((mids > patch16.a_O) & (mids < patch16.b_O),
                        np.sqrt(2.0 / L) * np.sin(np.pi * (mids - patch16.a_O) / L),
                        0.0)
        c1 = np.sum(prof * chi * h) / np.sum(chi * chi * h)
        expected = chi * (prof - c1 * chi)
        got = basis.normal_profile(np.eye(basis.n_cols)[0])[w.gslice]
        assert np.max(np.abs(got - expected)) < 1e-13


class TestNullspace:
    def test_default_basis_has_trivial_kernel(self, grid24, patch24):
        basis = build_xi(4, patch24, grid24)
        assert basis.dim_N == 0
        assert np.allclose(basis.P_Nperp, np.eye(basis.n_cols), atol=1e-14)
        # SVD oracle: numerical rank of the weighted sample matrix is full
        sqw = np.sqrt(np.concatenate([basis.w_bnd, basis.w_bnd]))
        r = np.linalg.matrix_rank(sqw[:, None] * basis.Xi, tol=1e-8)
        assert r == basis.n_cols

    def test_degenerate_fixture_kernel_direction(self):
        basis = appendix_basis(128)
        assert basis.dim_N == 1
        k = basis.ker_basis[:, 0]
        target = np.array([3.0, -1.0, 0.0, 0.0]) / np.sqrt(10.0)
        cos = abs(np.dot(k, target))
        assert cos >= 0.999
        assert abs(basis.proj_coeffs[0] - 0.3) < 2e-3
        assert abs(basis.proj_coeffs[1] + 0.1) < 2e-3

    def test_zero_map_has_full_kernel(self, grid16, patch16):
        basis = build_xi(2, patch16, grid16)
        basis.Xi = np.zeros_like(basis.Xi)
        basis = compute_nullspace(basis)
        assert basis.dim_N == basis.n_cols
        assert np.allclose(basis.P_N, np.eye(basis.n_cols), atol=1e-14)

    def test_projector_algebra(self, grid24, patch24):
        for basis in (build_xi(4, patch24, grid24), appendix_basis(96)):
            n = basis.n_cols
            eye = np.eye(n)
            assert np.allclose(basis.P_N + basis.P_Nperp, eye, atol=1e-13)
            assert np.allclose(basis.P_N @ basis.P_N, basis.P_N, atol=1e-13)
            assert np.allclose(basis.Q_f + basis.Q_l, eye, atol=1e-15)
            assert np.allclose(basis.Q_f @ basis.Q_l, 0.0, atol=1e-15)
            for P in (basis.P_N, basis.P_Nperp):
                for Q in (basis.Q_f, basis.Q_l):
                    comm = np.linalg.norm(P @ Q - Q @ P)
                    assert comm <= 1e-12

    def test_injectivity_on_complement(self, grid24, patch24):
        basis = build_xi(4, patch24, grid24)
        smax = max(basis.sigma_f[0], basis.sigma_l[0])
        assert min_singular_on_perp(basis) > basis.svd_tol * smax


class TestTraceCoordinates:
    def test_zero_trace_gives_zero(self, basis16, grid16):
        f = FlowField.zero(grid16)
        z = z_of_normal_trace(f, basis16)
        assert np.all(z == 0.0)

    def test_recovers_first_column(self, basis16, grid16):
        e1 = np.eye(basis16.n_cols)[0]
        f = FlowField.zero(grid16)
        f.bc.normal_mid = basis16.normal_profile(e1)
        z = z_of_normal_trace(f, basis16)
        expected = basis16.P_Nperp @ basis16.Q_f @ e1
        assert np.max(np.abs(z - expected)) < 1e-10

    def test_round_trip_on_complement(self, basis16, grid16, rng):
        for _ in range(10):
            z = basis16.P_Nperp @ rng.standard_normal(basis16.n_cols)
            f = FlowField.zero(grid16)
            f.bc.normal_mid = basis16.normal_profile(basis16.Q_f @ z)
            got = z_of_normal_trace(f, basis16)
            assert np.max(np.abs(got - basis16.Q_f @ z)) < 1e-8

    def test_foreign_trace_rejected(self, basis16, grid16):
        f = FlowField.zero(grid16)
        f.bc.normal_mid = np.ones(grid16.n_bnd)  # not in the control range
        with pytest.raises(ValueError, match="not in control range"):
            z_of_normal_trace(f, basis16)


def test_under_resolved_mode_rejected():
    grid = build_domain(1.0, 1.0, 8, 8)
    patch = build_cutoff(grid, a_c=0.30, b_c=0.60, a_O=0.20, b_O=0.70)
    with pytest.raises(ValueError, match="under-resolved"):
        build_xi(4, patch, grid)


def test_too_many_columns_rejected(grid16, patch16):
    with pytest.raises(ValueError, match="boundary samples"):
        build_xi(40, patch16, grid16)
