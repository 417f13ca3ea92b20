"""Reference flows, linearized/nonlinear convection, and the reduced model.

The reduced model is the Galerkin image of the semi-discrete dynamics on the
Stokes eigenbasis: testing the momentum equation against an eigenfield kills
the pressure exactly, so the state coordinates evolve by

    x' = A_xx(t) x + A_xk(t) kappa

where the columns of ``A_xk`` pair the eigenfields with the harmonic lifting
of each control direction plus the boundary injection terms of the diffusion
and convection closures.  Both simulator families evaluate the same affine
spatial operators, so the reduced/full mismatch is pure Galerkin truncation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import RectDomain
from .field_ops import (BoundaryData, FlowField, LerayProjector, StokesBasis,
                        field_from_flat, lap_u, lap_v, lift_gradient,
                        l2_norm, mass_vector)
from .control_basis import ControlBasis


# ---------------------------------------------------------------------------
# reference trajectories
# ---------------------------------------------------------------------------

def _periodic_shape(grid: RectDomain) -> FlowField:
    """Curl of sin^2 * sin^2 stream bump: exactly solenoidal, zero trace."""
    ix = np.arange(grid.nx + 1) * grid.hx
    jy = np.arange(grid.ny + 1) * grid.hy
    psi = (np.sin(np.pi * ix / grid.Lx) ** 2)[:, None] * (np.sin(np.pi * jy / grid.Ly) ** 2)[None, :]
    u = (psi[:, 1:] - psi[:, :-1]) / grid.hy
    v = -(psi[1:, :] - psi[:-1, :]) / grid.hx
    return FlowField(grid, u, v, BoundaryData.zero(grid))


class ReferenceTrajectory:
    """Time-dependent reference flow around which the dynamics are linearized.

    Fields have zero boundary trace and vanishing discrete divergence for all
    times.  ``separable`` references factor as ``a(t) * shape`` which the
    model assembly exploits; tabulated references interpolate linearly.
    """

    def __init__(self, grid: RectDomain, kind: str = "zero",
                 a0: float = 0.5, omega: float = 1.0,
                 samples: Optional[tuple] = None):
        self.grid = grid
        self.kind = kind
        self.a0 = a0
        self.omega = omega
        if kind == "zero":
            self.shape = FlowField.zero(grid)
            self.amplitude: Optional[Callable] = None
        elif kind == "periodic":
            self.shape = _periodic_shape(grid)
            self.amplitude = lambda t: a0 * (1.0 + 0.5 * np.sin(omega * t))
        elif kind == "csv":
            if samples is None:
                raise ValueError("tabulated reference needs (times, fields)")
            self.times, self.fields = samples
            if len(self.times) < 1:
                raise ValueError("tabulated reference is empty")
            self.shape = None
            self.amplitude = None
        else:
            raise ValueError(f"unknown reference kind {kind!r}")

    @property
    def separable(self) -> bool:
        return self.kind in ("zero", "periodic")

    @property
    def autonomous(self) -> bool:
        return self.kind == "zero" or (self.kind == "csv" and len(self.times) == 1)

    def field(self, t: float) -> FlowField:
        if self.kind == "zero":
            return self.shape
        if self.kind == "periodic":
            a = self.amplitude(t)
            return FlowField(self.grid, a * self.shape.u, a * self.shape.v,
                             BoundaryData.zero(self.grid))
        ts = self.times
        if len(ts) == 1 or t <= ts[0]:
            w = self.fields[0]
        elif t >= ts[-1]:
            w = self.fields[-1]
        else:
            k = int(np.searchsorted(ts, t) - 1)
            th = (t - ts[k]) / (ts[k + 1] - ts[k])
            w = ((1 - th) * self.fields[k] + th * self.fields[k + 1])
        return field_from_flat(self.grid, np.asarray(w, dtype=float))

    def bound_records(self, t_samples) -> dict:
        """Sampled sup norms standing in for the regularity bounds."""
        sups, dsups = [], []
        prev = None
        for k, t in enumerate(t_samples):
            f = self.field(t)
            m = max(np.max(np.abs(f.u)), np.max(np.abs(f.v)), 0.0)
            sups.append(m)
            if prev is not None:
                dt = t_samples[k] - t_samples[k - 1]
                dsups.append(max(np.max(np.abs(f.u - prev.u)),
                                 np.max(np.abs(f.v - prev.v))) / dt)
            prev = f
        return {"sup_uhat": float(max(sups)) if sups else 0.0,
                "sup_dt_uhat": float(max(dsups)) if dsups else 0.0}

    def check_contract(self, t_samples) -> None:
        for t in t_samples:
            f = self.field(t)
            from .field_ops import extract_normal_trace, max_divergence
            if np.max(np.abs(extract_normal_trace(f))) > 1e-12:
                raise ValueError("reference trajectory has nonzero boundary trace")
            if max_divergence(f) > 1e-9 * max(l2_norm(f), 1.0):
                raise ValueError("reference trajectory is not divergence free")


# ---------------------------------------------------------------------------
# convection operators
# ---------------------------------------------------------------------------

def _ghost_pad_u(grid, u, bc: BoundaryData):
    gb = bc.tangential_cartesian("bottom")
    gt = bc.tangential_cartesian("top")
    up = np.empty((grid.nx + 1, grid.ny + 2))
    up[:, 1:-1] = u
    up[:, 0] = 2.0 * gb - u[:, 0]
    up[:, -1] = 2.0 * gt - u[:, -1]
    return up


def _ghost_pad_v(grid, v, bc: BoundaryData):
    gl = bc.tangential_cartesian("left")
    gr = bc.tangential_cartesian("right")
    vp = np.empty((grid.nx + 2, grid.ny + 1))
    vp[1:-1, :] = v
    vp[0, :] = 2.0 * gl - v[0, :]
    vp[-1, :] = 2.0 * gr - v[-1, :]
    return vp


def conv_skew(a: FlowField, w_u: np.ndarray, w_v: np.ndarray,
              bc_w: BoundaryData):
    """Skew-symmetric transport of ``w`` by ``a`` on interior faces.

    Average of the flux (divergence) form and its dual advective form, which
    works out to the flux form minus half the transported value times the
    face-interpolated carrier divergence.  For a discretely solenoidal
    carrier the correction vanishes and the quadratic form is energy neutral
    to round-off on zero-trace arguments.
    """
    grid = a.grid
    nx, ny, hx, hy = grid.nx, grid.ny, grid.hx, grid.hy
    out_u = np.zeros(grid.shape_u)
    out_v = np.zeros(grid.shape_v)
    au = a.u
    av = a.v

    # --- u component: x-fluxes at cell centers, y-fluxes at vertices
    wu_p = _ghost_pad_u(grid, w_u, bc_w)
    ax_c = 0.5 * (au[1:, :] + au[:-1, :])                    # (nx, ny)
    fx = ax_c * 0.5 * (w_u[1:, :] + w_u[:-1, :])
    ay_vert = 0.5 * (av[:-1, :] + av[1:, :])                 # (nx-1, ny+1)
    wu_vert = 0.5 * (wu_p[1:nx, :-1] + wu_p[1:nx, 1:])       # (nx-1, ny+1)
    fy = ay_vert * wu_vert
    div_u = (fx[1:, :] - fx[:-1, :]) / hx + (fy[:, 1:] - fy[:, :-1]) / hy
    da_u = (ax_c[1:, :] - ax_c[:-1, :]) / hx + (ay_vert[:, 1:] - ay_vert[:, :-1]) / hy
    out_u[1:nx, :] = div_u - 0.5 * w_u[1:nx, :] * da_u

    # --- v component: y-fluxes at cell centers, x-fluxes at vertices
    wv_p = _ghost_pad_v(grid, w_v, bc_w)
    ay_c = 0.5 * (av[:, 1:] + av[:, :-1])                    # (nx, ny)
    fyv = ay_c * 0.5 * (w_v[:, 1:] + w_v[:, :-1])
    ax_vert = 0.5 * (au[:, :-1] + au[:, 1:])                 # (nx+1, ny-1)
    wv_vert = 0.5 * (wv_p[:-1, 1:ny] + wv_p[1:, 1:ny])       # (nx+1, ny-1)
    fxv = ax_vert * wv_vert
    div_v = (fyv[:, 1:] - fyv[:, :-1]) / hy + (fxv[1:, :] - fxv[:-1, :]) / hx
    da_v = (ay_c[:, 1:] - ay_c[:, :-1]) / hy + (ax_vert[1:, :] - ax_vert[:-1, :]) / hx
    out_v[:, 1:ny] = div_v - 0.5 * w_v[:, 1:ny] * da_v
    return out_u, out_v


def shear(w_u: np.ndarray, w_v: np.ndarray, a: FlowField):
    """Pointwise gradient coupling ``(w . grad) a`` on interior faces."""
    grid = a.grid
    nx, ny, hx, hy = grid.nx, grid.ny, grid.hx, grid.hy
    out_u = np.zeros(grid.shape_u)
    out_v = np.zeros(grid.shape_v)
    au_p = _ghost_pad_u(grid, a.u, a.bc)
    av_p = _ghost_pad_v(grid, a.v, a.bc)
    # u component: w_x d/dx a_u + w_y d/dy a_u
    dau_dx = (a.u[2:, :] - a.u[:-2, :]) / (2.0 * hx)
    dau_dy = (au_p[1:nx, 2:] - au_p[1:nx, :-2]) / (2.0 * hy)
    wy_at_u = 0.25 * (w_v[:-1, :-1] + w_v[:-1, 1:] + w_v[1:, :-1] + w_v[1:, 1:])
    out_u[1:nx, :] = w_u[1:nx, :] * dau_dx + wy_at_u * dau_dy
    # v component
    dav_dy = (a.v[:, 2:] - a.v[:, :-2]) / (2.0 * hy)
    dav_dx = (av_p[2:, 1:ny] - av_p[:-2, 1:ny]) / (2.0 * hx)
    wx_at_v = 0.25 * (w_u[:-1, :-1] + w_u[1:, :-1] + w_u[:-1, 1:] + w_u[1:, 1:])
    out_v[:, 1:ny] = w_v[:, 1:ny] * dav_dy + wx_at_v * dav_dx
    return out_u, out_v


def linearized_convection(uhat: FlowField, w_u, w_v, bc_w: BoundaryData):
    """Transport by the reference plus gradient coupling of the reference."""
    cu, cv = conv_skew(uhat, w_u, w_v, bc_w)
    su, sv = shear(w_u, w_v, uhat)
    return cu + su, cv + sv


def convection_nonlinear(v: FlowField) -> FlowField:
    """Self-transport in skew form; energy neutral on zero-trace fields."""
    cu, cv = conv_skew(v, v.u, v.v, v.bc)
    return FlowField(v.grid, cu, cv, BoundaryData.zero(v.grid))


# ---------------------------------------------------------------------------
# full-order linearized operator
# ---------------------------------------------------------------------------

class OseenOperator:
    """Application of the projected linearized operator around a reference.

    ``apply`` evaluates the Leray projection of diffusion plus linearized
    convection with the supplied boundary closure.  Assembly itself cannot
    fail; a CFL advisory for explicit transport is available separately.
    """

    def __init__(self, ref: ReferenceTrajectory, nu: float,
                 projector: Optional[LerayProjector] = None):
        self.ref = ref
        self.grid = ref.grid
        self.nu = nu
        self.projector = projector or LerayProjector(ref.grid)

    def spatial_rhs(self, f: FlowField, t: float,
                    bc: Optional[BoundaryData] = None):
        """Unprojected rhs arrays: nu*lap(f) - B(uhat) f with closure ``bc``."""
        b = bc if bc is not None else f.bc
        uhat = self.ref.field(t)
        ru = self.nu * lap_u(self.grid, f.u, b)
        rv = self.nu * lap_v(self.grid, f.v, b)
        if self.ref.kind != "zero":
            cu, cv = linearized_convection(uhat, f.u, f.v, b)
            ru -= cu
            rv -= cv
        return ru, rv

    def apply(self, f: FlowField, t: float = 0.0,
              bc: Optional[BoundaryData] = None) -> FlowField:
        """Projected operator value Pi(-nu lap f + B(uhat) f)."""
        ru, rv = self.spatial_rhs(f, t, bc)
        w = FlowField(self.grid, -ru, -rv, BoundaryData.zero(self.grid))
        out, _ = self.projector.project(w)
        return out

    def cfl_advisory(self, dt: float, t: float = 0.0) -> float:
        uhat = self.ref.field(t)
        umax = max(np.max(np.abs(uhat.u)), np.max(np.abs(uhat.v)), 0.0)
        return umax * dt / min(self.grid.hx, self.grid.hy)


def apply_B(uhat: FlowField, w: FlowField, bc: Optional[BoundaryData] = None) -> FlowField:
    """Linearized convection as a field, for adjoint/linearity checks."""
    b = bc if bc is not None else w.bc
    cu, cv = linearized_convection(uhat, w.u, w.v, b)
    return FlowField(w.grid, cu, cv, BoundaryData.zero(w.grid))


def B_matrix(uhat: FlowField, grid: RectDomain) -> np.ndarray:
    """Dense matrix of the linearized convection on zero-trace full arrays.

    Used by the adjoint identity check; desk-scale grids only.
    """
    n = grid.n_u + grid.n_v
    out = np.zeros((n, n))
    zero_bc = BoundaryData.zero(grid)
    for k in range(n):
        w = np.zeros(n)
        w[k] = 1.0
        f = field_from_flat(grid, w)
        cu, cv = linearized_convection(uhat, f.u, f.v, zero_bc)
        out[:, k] = np.concatenate([cu.ravel(), cv.ravel()])
    return out


# ---------------------------------------------------------------------------
# reduced extended model
# ---------------------------------------------------------------------------

@dataclass
class ReducedModel:
    """Sampled Galerkin matrices of the linearized dynamics with control.

    ``A_xx`` acts on eigen coordinates, ``A_xk`` on effective control
    coordinates; tables are sampled on ``t_grid`` and interpolated linearly.
    ``lift`` maps effective coordinates to the harmonic lifting fields used
    to reconstruct full-order states from reduced ones.
    """

    grid: RectDomain
    nu: float
    stokes: StokesBasis
    basis: ControlBasis
    t_grid: np.ndarray
    A_xx_tab: np.ndarray = field(repr=False)   # (K, N, N)
    A_xk_tab: np.ndarray = field(repr=False)   # (K, N, n_perp)
    lift: np.ndarray = field(repr=False)       # (n_faces, n_perp)
    ref: ReferenceTrajectory = None

    @property
    def N_gal(self) -> int:
        return self.stokes.N_gal

    @property
    def n_perp(self) -> int:
        return self.basis.n_perp

    @property
    def n_ext(self) -> int:
        return self.N_gal + self.n_perp

    @property
    def autonomous(self) -> bool:
        return self.A_xx_tab.shape[0] == 1

    def matrices(self, t: float):
        tg = self.t_grid
        if len(tg) == 1 or t <= tg[0]:
            return self.A_xx_tab[0], self.A_xk_tab[0]
        if t >= tg[-1]:
            return self.A_xx_tab[-1], self.A_xk_tab[-1]
        k = int(np.searchsorted(tg, t) - 1)
        th = (t - tg[k]) / (tg[k + 1] - tg[k])
        return ((1 - th) * self.A_xx_tab[k] + th * self.A_xx_tab[k + 1],
                (1 - th) * self.A_xk_tab[k] + th * self.A_xk_tab[k + 1])

    def rhs(self, t: float, x: np.ndarray, kc: np.ndarray) -> np.ndarray:
        Axx, Axk = self.matrices(t)
        return Axx @ x + Axk @ kc

    def reconstruct_full(self, x: np.ndarray, kc: np.ndarray) -> FlowField:
        """Full-order state: eigen part plus harmonic lifting of the trace."""
        w = self.stokes.E @ np.asarray(x, dtype=float) + self.lift @ np.asarray(kc, dtype=float)
        f = field_from_flat(self.grid, w, bc=self.basis.boundary_data(self.basis.kappa_full(kc)))
        return f


def assemble_reduced(ref: ReferenceTrajectory, stokes: StokesBasis,
                     basis: ControlBasis, t_grid, nu: float,
                     projector: Optional[LerayProjector] = None) -> ReducedModel:
    """Exact Galerkin pairing of the affine spatial operators.

    Each control column couples through the diffusion closure of its boundary
    data and through transport of its lifting; eigen columns reduce to the
    (negative) Stokes spectrum plus the linearized convection.
    """
    grid = stokes.grid
    pr = projector or LerayProjector(grid)
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if ref.autonomous:
        t_grid = t_grid[:1]
    N = stokes.N_gal
    n_perp = basis.n_perp
    mass = mass_vector(grid)
    ET_M = stokes.E.T * mass[None, :]
    zero_bc = BoundaryData.zero(grid)

    lift_cols = np.zeros((grid.n_u + grid.n_v, n_perp))
    bds = []
    for l in range(n_perp):
        kap = basis.kappa_full(np.eye(n_perp)[l])
        lift_cols[:, l] = lift_gradient(kap, basis, pr).flat()
        bds.append(basis.boundary_data(kap))

    # time-independent diffusion parts
    diff_xx = np.zeros((N, N))
    for j in range(N):
        e = stokes.mode(j)
        w = np.concatenate([(nu * lap_u(grid, e.u, zero_bc)).ravel(),
                            (nu * lap_v(grid, e.v, zero_bc)).ravel()])
        diff_xx[:, j] = ET_M @ w
    diff_xk = np.zeros((N, n_perp))
    for l in range(n_perp):
        f = field_from_flat(grid, lift_cols[:, l], bc=bds[l])
        w = np.concatenate([(nu * lap_u(grid, f.u, bds[l])).ravel(),
                            (nu * lap_v(grid, f.v, bds[l])).ravel()])
        diff_xk[:, l] = ET_M @ w

    def conv_parts(uhat: FlowField):
        cxx = np.zeros((N, N))
        for j in range(N):
            e = stokes.mode(j)
            cu, cv = linearized_convection(uhat, e.u, e.v, zero_bc)
            cxx[:, j] = ET_M @ np.concatenate([cu.ravel(), cv.ravel()])
        cxk = np.zeros((N, n_perp))
        for l in range(n_perp):
            f = field_from_flat(grid, lift_cols[:, l], bc=bds[l])
            cu, cv = linearized_convection(uhat, f.u, f.v, bds[l])
            cxk[:, l] = ET_M @ np.concatenate([cu.ravel(), cv.ravel()])
        return cxx, cxk

    K = len(t_grid)
    A_xx = np.empty((K, N, N))
    A_xk = np.empty((K, N, n_perp))
    if ref.kind == "zero":
        for k in range(K):
            A_xx[k] = diff_xx
            A_xk[k] = diff_xk
    elif ref.separable:
        cxx, cxk = conv_parts(ref.shape)
        for k, t in enumerate(t_grid):
            a = ref.amplitude(t)
            A_xx[k] = diff_xx - a * cxx
            A_xk[k] = diff_xk - a * cxk
    else:
        for k, t in enumerate(t_grid):
            cxx, cxk = conv_parts(ref.field(t))
            A_xx[k] = diff_xx - cxx
            A_xk[k] = diff_xk - cxk

    return ReducedModel(grid=grid, nu=nu, stokes=stokes, basis=basis,
                        t_grid=t_grid, A_xx_tab=A_xx, A_xk_tab=A_xk,
                        lift=lift_cols, ref=ref)
