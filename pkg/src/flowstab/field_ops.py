"""Staggered-grid vector calculus: divergence, projection, liftings, eigenbasis.

All velocity fields live on the MAC grid of :mod:`flowstab.geometry`.  A
``FlowField`` carries the face arrays plus a boundary record; wall-normal
faces sit exactly on the boundary while tangential boundary values enter the
difference operators through mirror ghosts.  The Leray projection is realized
by a Neumann-Poisson solve whose discrete divergence theorem holds exactly,
so projected fields are divergence free and orthogonal to discrete gradients
to solver precision.

The Stokes eigenbasis is computed in stream-function variables: on a simply
connected rectangle the discretely divergence-free fields with zero normal
trace are exactly the curls of vertex stream functions vanishing on the
boundary, which turns the constrained eigenproblem into a symmetric definite
pencil handled by shift-invert Lanczos.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import RectDomain, WALL_ORDER


# ---------------------------------------------------------------------------
# boundary data and fields
# ---------------------------------------------------------------------------

@dataclass
class BoundaryData:
    """Boundary velocity record: normal/tangential scalars at midpoints.

    ``tan_nodes[wall]`` holds the tangential scalar at the wall's nodes,
    indexed like the tangential velocity array along that wall; it is what
    the mirror-ghost closure of the difference operators consumes.
    """

    grid: RectDomain
    normal_mid: np.ndarray
    tan_mid: np.ndarray
    tan_nodes: dict

    @classmethod
    def zero(cls, grid: RectDomain) -> "BoundaryData":
        tn = {name: np.zeros(grid.wall(name).n_seg + 1) for name in WALL_ORDER}
        return cls(grid, np.zeros(grid.n_bnd), np.zeros(grid.n_bnd), tn)

    @classmethod
    def from_midpoints(cls, grid: RectDomain, normal_mid, tan_mid) -> "BoundaryData":
        """Midpoint samples only; node values by averaging adjacent midpoints."""
        normal_mid = np.asarray(normal_mid, dtype=float)
        tan_mid = np.asarray(tan_mid, dtype=float)
        tn = {}
        for name in WALL_ORDER:
            w = grid.wall(name)
            m = tan_mid[w.gslice]
            nodes = np.zeros(w.n_seg + 1)
            nodes[1:-1] = 0.5 * (m[1:] + m[:-1])
            nodes[0] = m[0]
            nodes[-1] = m[-1]
            tn[name] = nodes
        return cls(grid, normal_mid.copy(), tan_mid.copy(), tn)

    def copy(self) -> "BoundaryData":
        return BoundaryData(self.grid, self.normal_mid.copy(), self.tan_mid.copy(),
                            {k: v.copy() for k, v in self.tan_nodes.items()})

    def scaled(self, c: float) -> "BoundaryData":
        return BoundaryData(self.grid, c * self.normal_mid, c * self.tan_mid,
                            {k: c * v for k, v in self.tan_nodes.items()})

    def tangential_cartesian(self, wall: str) -> np.ndarray:
        """Cartesian component of the tangential data along one wall's nodes."""
        w = self.grid.wall(wall)
        return w.tan_sign * self.tan_nodes[wall]

    def net_flux(self) -> float:
        return float(np.dot(self.grid.bnd_h, self.normal_mid))


@dataclass
class FlowField:
    """MAC velocity field with an attached boundary record."""

    grid: RectDomain
    u: np.ndarray
    v: np.ndarray
    bc: BoundaryData

    @classmethod
    def zero(cls, grid: RectDomain) -> "FlowField":
        return cls(grid, np.zeros(grid.shape_u), np.zeros(grid.shape_v),
                   BoundaryData.zero(grid))

    @classmethod
    def from_interior(cls, grid: RectDomain, u, v, bc: BoundaryData) -> "FlowField":
        """Build a field whose wall-normal faces are written from ``bc``."""
        f = cls(grid, np.array(u, dtype=float), np.array(v, dtype=float), bc.copy())
        set_normal_faces(f, bc)
        return f

    def copy(self) -> "FlowField":
        return FlowField(self.grid, self.u.copy(), self.v.copy(), self.bc.copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.u.ravel(), self.v.ravel()])


def field_from_flat(grid: RectDomain, w: np.ndarray,
                    bc: Optional[BoundaryData] = None) -> FlowField:
    u = w[:grid.n_u].reshape(grid.shape_u)
    v = w[grid.n_u:].reshape(grid.shape_v)
    return FlowField(grid, u.copy(), v.copy(),
                     bc.copy() if bc is not None else BoundaryData.zero(grid))


def set_normal_faces(f: FlowField, bc: BoundaryData) -> None:
    for name in WALL_ORDER:
        w = f.grid.wall(name)
        vals = bc.normal_mid[w.gslice] * w.normal_sign  # face value from n-scalar
        i_idx, j_idx = w.normal_ij
        if w.normal_comp == "u":
            f.u[i_idx, j_idx] = vals
        else:
            f.v[i_idx, j_idx] = vals


def extract_normal_trace(f: FlowField) -> np.ndarray:
    """Wall-normal scalar (v.n) read off the boundary faces."""
    out = np.empty(f.grid.n_bnd)
    for name in WALL_ORDER:
        w = f.grid.wall(name)
        i_idx, j_idx = w.normal_ij
        arr = f.u if w.normal_comp == "u" else f.v
        out[w.gslice] = w.normal_sign * arr[i_idx, j_idx]
    return out


# ---------------------------------------------------------------------------
# mass, inner products, norms
# ---------------------------------------------------------------------------

def mass_weights(grid: RectDomain):
    """Face volumes; wall-normal faces carry half cells."""
    wu = np.full(grid.shape_u, grid.cell_volume)
    wu[0, :] *= 0.5
    wu[-1, :] *= 0.5
    wv = np.full(grid.shape_v, grid.cell_volume)
    wv[:, 0] *= 0.5
    wv[:, -1] *= 0.5
    return wu, wv


def mass_vector(grid: RectDomain) -> np.ndarray:
    wu, wv = mass_weights(grid)
    return np.concatenate([wu.ravel(), wv.ravel()])


def inner(a: FlowField, b: FlowField) -> float:
    wu, wv = mass_weights(a.grid)
    return float(np.sum(wu * a.u * b.u) + np.sum(wv * a.v * b.v))


def l2_norm(a: FlowField) -> float:
    return float(np.sqrt(max(inner(a, a), 0.0)))


def divergence(f: FlowField) -> np.ndarray:
    g = f.grid
    return ((f.u[1:, :] - f.u[:-1, :]) / g.hx
            + (f.v[:, 1:] - f.v[:, :-1]) / g.hy)


def max_divergence(f: FlowField) -> float:
    return float(np.max(np.abs(divergence(f)))) if f.grid.n_cells else 0.0


def h1_seminorm_sq(f: FlowField) -> float:
    """Discrete gradient energy, one-sided at walls against the trace record."""
    g = f.grid
    vol = g.cell_volume
    s = 0.0
    # u: x-differences across cells, y-differences between rows + wall terms
    du_x = (f.u[1:, :] - f.u[:-1, :]) / g.hx
    s += vol * np.sum(du_x ** 2)
    du_y = (f.u[:, 1:] - f.u[:, :-1]) / g.hy
    s += vol * np.sum(du_y ** 2)
    gb = f.bc.tangential_cartesian("bottom")
    gt = f.bc.tangential_cartesian("top")
    s += 0.5 * vol * np.sum(((f.u[:, 0] - gb) / (0.5 * g.hy)) ** 2)
    s += 0.5 * vol * np.sum(((f.u[:, -1] - gt) / (0.5 * g.hy)) ** 2)
    dv_y = (f.v[:, 1:] - f.v[:, :-1]) / g.hy
    s += vol * np.sum(dv_y ** 2)
    dv_x = (f.v[1:, :] - f.v[:-1, :]) / g.hx
    s += vol * np.sum(dv_x ** 2)
    gl = f.bc.tangential_cartesian("left")
    gr = f.bc.tangential_cartesian("right")
    s += 0.5 * vol * np.sum(((f.v[0, :] - gl) / (0.5 * g.hx)) ** 2)
    s += 0.5 * vol * np.sum(((f.v[-1, :] - gr) / (0.5 * g.hx)) ** 2)
    return float(s)


def h1_norm(f: FlowField) -> float:
    return float(np.sqrt(inner(f, f) + h1_seminorm_sq(f)))


# ---------------------------------------------------------------------------
# component Laplacians with Dirichlet closure
# ---------------------------------------------------------------------------

def lap_u(grid: RectDomain, u: np.ndarray, bc: BoundaryData) -> np.ndarray:
    """Five-point Laplacian of the u component on interior vertical faces.

    Normal boundary columns of ``u`` are data; tangential walls close with
    mirror ghosts ``2 g - u``.  Output boundary columns are zero.
    """
    nx, ny = grid.nx, grid.ny
    out = np.zeros_like(u)
    gb = bc.tangential_cartesian("bottom")
    gt = bc.tangential_cartesian("top")
    uy = np.empty((nx + 1, ny + 2))
    uy[:, 1:-1] = u
    uy[:, 0] = 2.0 * gb - u[:, 0]
    uy[:, -1] = 2.0 * gt - u[:, -1]
    out[1:nx, :] = ((u[2:, :] - 2.0 * u[1:nx, :] + u[:nx - 1, :]) / grid.hx ** 2
                    + (uy[1:nx, 2:] - 2.0 * uy[1:nx, 1:-1] + uy[1:nx, :-2]) / grid.hy ** 2)
    return out


def lap_v(grid: RectDomain, v: np.ndarray, bc: BoundaryData) -> np.ndarray:
    nx, ny = grid.nx, grid.ny
    out = np.zeros_like(v)
    gl = bc.tangential_cartesian("left")
    gr = bc.tangential_cartesian("right")
    vx = np.empty((nx + 2, ny + 1))
    vx[1:-1, :] = v
    vx[0, :] = 2.0 * gl - v[0, :]
    vx[-1, :] = 2.0 * gr - v[-1, :]
    out[:, 1:ny] = ((v[:, 2:] - 2.0 * v[:, 1:ny] + v[:, :ny - 1]) / grid.hy ** 2
                    + (vx[2:, 1:ny] - 2.0 * vx[1:-1, 1:ny] + vx[:-2, 1:ny]) / grid.hx ** 2)
    return out


def laplacian(f: FlowField, bc: Optional[BoundaryData] = None) -> FlowField:
    """Vector Laplacian with Dirichlet closure; zero boundary record."""
    b = bc if bc is not None else f.bc
    return FlowField(f.grid, lap_u(f.grid, f.u, b), lap_v(f.grid, f.v, b),
                     BoundaryData.zero(f.grid))


def _interior_u_ids(grid):
    nx, ny = grid.nx, grid.ny
    ids = -np.ones(grid.shape_u, dtype=int)
    ids[1:nx, :] = np.arange((nx - 1) * ny).reshape(nx - 1, ny)
    return ids


def _interior_v_ids(grid):
    nx, ny = grid.nx, grid.ny
    ids = -np.ones(grid.shape_v, dtype=int)
    ids[:, 1:ny] = np.arange(nx * (ny - 1)).reshape(nx, ny - 1)
    return ids


def stiffness_u(grid: RectDomain) -> sp.csr_matrix:
    """vol * (-Laplacian) on interior u faces, homogeneous Dirichlet closure."""
    nx, ny = grid.nx, grid.ny
    vol = grid.cell_volume
    cx, cy = vol / grid.hx ** 2, vol / grid.hy ** 2
    ids = _interior_u_ids(grid)
    rows, cols, vals = [], [], []
    for i in range(1, nx):
        for j in range(ny):
            k = ids[i, j]
            diag = 2.0 * cx
            for ii in (i - 1, i + 1):
                if 1 <= ii <= nx - 1:
                    rows.append(k); cols.append(ids[ii, j]); vals.append(-cx)
            # mirror ghosts add one extra unit per adjacent wall
            diag += cy * (2.0 + (j == 0) + (j == ny - 1))
            for jj in (j - 1, j + 1):
                if 0 <= jj <= ny - 1:
                    rows.append(k); cols.append(ids[i, jj]); vals.append(-cy)
            rows.append(k); cols.append(k); vals.append(diag)
    n = (nx - 1) * ny
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def stiffness_v(grid: RectDomain) -> sp.csr_matrix:
    nx, ny = grid.nx, grid.ny
    vol = grid.cell_volume
    cx, cy = vol / grid.hx ** 2, vol / grid.hy ** 2
    ids = _interior_v_ids(grid)
    rows, cols, vals = [], [], []
    for i in range(nx):
        for j in range(1, ny):
            k = ids[i, j]
            diag = 2.0 * cy
            for jj in (j - 1, j + 1):
                if 1 <= jj <= ny - 1:
                    rows.append(k); cols.append(ids[i, jj]); vals.append(-cy)
            diag += cx * (2.0 + (i == 0) + (i == nx - 1))
            for ii in (i - 1, i + 1):
                if 0 <= ii <= nx - 1:
                    rows.append(k); cols.append(ids[ii, j]); vals.append(-cx)
            rows.append(k); cols.append(k); vals.append(diag)
    n = nx * (ny - 1)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def interior_u(grid, u):
    return u[1:grid.nx, :].ravel()


def interior_v(grid, v):
    return v[:, 1:grid.ny].ravel()


def embed_interior(grid, ui, vi, bc: Optional[BoundaryData] = None) -> FlowField:
    u = np.zeros(grid.shape_u)
    v = np.zeros(grid.shape_v)
    u[1:grid.nx, :] = ui.reshape(grid.nx - 1, grid.ny)
    v[:, 1:grid.ny] = vi.reshape(grid.nx, grid.ny - 1)
    f = FlowField(grid, u, v, bc.copy() if bc is not None else BoundaryData.zero(grid))
    if bc is not None:
        set_normal_faces(f, bc)
    return f


# ---------------------------------------------------------------------------
# Neumann-Poisson solver and the Leray projection
# ---------------------------------------------------------------------------

def boundary_flux_cells(grid: RectDomain, normal_mid: np.ndarray) -> np.ndarray:
    """Per-cell outward flux contributed by the boundary faces."""
    out = np.zeros((grid.nx, grid.ny))
    for name in WALL_ORDER:
        w = grid.wall(name)
        flux = normal_mid[w.gslice] * w.h
        i_idx, j_idx = w.normal_ij
        if w.normal_comp == "v":
            cell_j = np.where(j_idx == 0, 0, grid.ny - 1)
            out[i_idx, cell_j] += flux
        else:
            cell_i = np.where(i_idx == 0, 0, grid.nx - 1)
            out[cell_i, j_idx] += flux
    return out


class NeumannPoisson:
    """Cell-centered Poisson problem with prescribed boundary flux.

    Finite-volume form: for each cell, the sum of interior face fluxes of p
    equals rhs*vol minus the prescribed outward boundary flux.  The operator
    kernel (constants) is removed by a bordered mean-zero constraint, so
    compatible data yields the exact zero-mean solution.
    """

    def __init__(self, grid: RectDomain):
        self.grid = grid
        nx, ny = grid.nx, grid.ny
        n = nx * ny
        cx, cy = grid.hy / grid.hx, grid.hx / grid.hy
        ids = np.arange(n).reshape(nx, ny)
        rows, cols, vals = [], [], []
        for i in range(nx):
            for j in range(ny):
                k = ids[i, j]
                diag = 0.0
                if i > 0:
                    rows.append(k); cols.append(ids[i - 1, j]); vals.append(cx)
                    diag -= cx
                if i < nx - 1:
                    rows.append(k); cols.append(ids[i + 1, j]); vals.append(cx)
                    diag -= cx
                if j > 0:
                    rows.append(k); cols.append(ids[i, j - 1]); vals.append(cy)
                    diag -= cy
                if j < ny - 1:
                    rows.append(k); cols.append(ids[i, j + 1]); vals.append(cy)
                    diag -= cy
                rows.append(k); cols.append(k); vals.append(diag)
        A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        vol = grid.cell_volume
        one = np.full((n, 1), vol)
        K = sp.bmat([[A, one], [one.T, None]], format="csc")
        self._lu = spla.splu(K)
        self._n = n

    def solve(self, rhs_cells: np.ndarray, flux_normal_mid: np.ndarray,
              check_compat: bool = True) -> np.ndarray:
        """Solve lap p = rhs with dp/dn = flux; returns zero-mean p."""
        g = self.grid
        b = rhs_cells * g.cell_volume - boundary_flux_cells(g, flux_normal_mid)
        total = float(np.sum(b))
        if check_compat:
            scale = float(np.sum(np.abs(b))) + 1e-30
            if abs(total) > 1e-10 * max(scale, 1.0):
                raise ValueError("Neumann compatibility violation: net source "
                                 f"{total:.3e} vs scale {scale:.3e}")
        sol = self._lu.solve(np.concatenate([b.ravel(), [0.0]]))
        return sol[:self._n].reshape(g.nx, g.ny)


def grad_faces(grid: RectDomain, p: np.ndarray):
    """Interior-face gradient of a cell scalar; boundary faces zeroed."""
    gu = np.zeros(grid.shape_u)
    gv = np.zeros(grid.shape_v)
    gu[1:grid.nx, :] = (p[1:, :] - p[:-1, :]) / grid.hx
    gv[:, 1:grid.ny] = (p[:, 1:] - p[:, :-1]) / grid.hy
    return gu, gv


class LerayProjector:
    """Cached factorization for repeated Leray projections on one grid."""

    def __init__(self, grid: RectDomain):
        self.grid = grid
        self.poisson = NeumannPoisson(grid)

    def project(self, f: FlowField):
        """Return (Pi f, p): p solves the Neumann problem driven by div f."""
        g = self.grid
        gn = extract_normal_trace(f)
        p = self.poisson.solve(divergence(f), gn)
        gu, gv = grad_faces(g, p)
        out = FlowField(g, f.u - gu, f.v - gv, BoundaryData.zero(g))
        set_normal_faces(out, out.bc)  # zero normal trace exactly
        return out, p

    def pressure(self, f: FlowField) -> np.ndarray:
        return self.poisson.solve(divergence(f), extract_normal_trace(f))


def leray_project(f: FlowField, projector: Optional[LerayProjector] = None):
    pr = projector if projector is not None else LerayProjector(f.grid)
    return pr.project(f)


def lift_gradient(kappa: np.ndarray, basis, projector: Optional[LerayProjector] = None) -> FlowField:
    """Harmonic gradient extension of the normal part of a control vector.

    Solves ``lap p = 0`` with ``dp/dn`` equal to the normal boundary profile
    of ``Xi Q_f kappa`` and returns ``grad p``.  The returned record carries
    the imposed normal data and no tangential data: the field represents pure
    normal control content.
    """
    grid = basis.grid
    kf = basis.Q_f @ np.asarray(kappa, dtype=float)
    gn = basis.normal_profile(kf)
    pr = projector if projector is not None else LerayProjector(grid)
    p = pr.poisson.solve(np.zeros((grid.nx, grid.ny)), gn)
    gu, gv = grad_faces(grid, p)
    bc = BoundaryData.zero(grid)
    bc.normal_mid = gn.copy()
    out = FlowField(grid, gu, gv, bc)
    set_normal_faces(out, bc)
    return out


# ---------------------------------------------------------------------------
# Stokes lifting (velocity Dirichlet data -> divergence-free extension)
# ---------------------------------------------------------------------------

class StokesSaddle:
    """Factorized MAC Stokes saddle system with Dirichlet velocity data."""

    def __init__(self, grid: RectDomain):
        self.grid = grid
        nx, ny = grid.nx, grid.ny
        self.nu_int = (nx - 1) * ny
        self.nv_int = nx * (ny - 1)
        n_cells = nx * ny
        Au = stiffness_u(grid)
        Av = stiffness_v(grid)
        # gradient blocks scaled to vol * (dp/dx) on faces
        hy, hx = grid.hy, grid.hx
        ids_p = np.arange(n_cells).reshape(nx, ny)
        rows, cols, vals = [], [], []
        idu = _interior_u_ids(grid)
        for i in range(1, nx):
            for j in range(ny):
                k = idu[i, j]
                rows.append(k); cols.append(ids_p[i, j]); vals.append(hy)
                rows.append(k); cols.append(ids_p[i - 1, j]); vals.append(-hy)
        Gx = sp.csr_matrix((vals, (rows, cols)), shape=(self.nu_int, n_cells))
        rows, cols, vals = [], [], []
        idv = _interior_v_ids(grid)
        for i in range(nx):
            for j in range(1, ny):
                k = idv[i, j]
                rows.append(k); cols.append(ids_p[i, j]); vals.append(hx)
                rows.append(k); cols.append(ids_p[i, j - 1]); vals.append(-hx)
        Gy = sp.csr_matrix((vals, (rows, cols)), shape=(self.nv_int, n_cells))
        one = np.full((n_cells, 1), grid.cell_volume)
        K = sp.bmat([
            [Au, None, Gx, None],
            [None, Av, Gy, None],
            [Gx.T, Gy.T, None, one],
            [None, None, one.T, None],
        ], format="csc")
        self._lu = spla.splu(K)

    def solve(self, g: BoundaryData):
        grid = self.grid
        if abs(g.net_flux()) > 1e-10 * (float(np.dot(grid.bnd_h, np.abs(g.normal_mid))) + 1.0):
            raise ValueError("incompatible boundary data: nonzero net flux")
        vol = grid.cell_volume
        bu = vol * lap_u(grid, _normal_only_u(grid, g), g)
        bv = vol * lap_v(grid, _normal_only_v(grid, g), g)
        # continuity rows are G^T w = + boundary outward flux (G^T = -div)
        bdiv = boundary_flux_cells(grid, g.normal_mid)
        rhs = np.concatenate([
            interior_u(grid, bu), interior_v(grid, bv), bdiv.ravel(), [0.0],
        ])
        sol = self._lu.solve(rhs)
        ui = sol[:self.nu_int]
        vi = sol[self.nu_int:self.nu_int + self.nv_int]
        p = sol[self.nu_int + self.nv_int:-1].reshape(grid.nx, grid.ny)
        f = embed_interior(grid, ui, vi, bc=g)
        return f, p


def _normal_only_u(grid, g: BoundaryData):
    """u array holding only the prescribed wall-normal columns."""
    u = np.zeros(grid.shape_u)
    for name in ("left", "right"):
        w = grid.wall(name)
        i_idx, j_idx = w.normal_ij
        u[i_idx, j_idx] = w.normal_sign * g.normal_mid[w.gslice]
    return u


def _normal_only_v(grid, g: BoundaryData):
    v = np.zeros(grid.shape_v)
    for name in ("bottom", "top"):
        w = grid.wall(name)
        i_idx, j_idx = w.normal_ij
        v[i_idx, j_idx] = w.normal_sign * g.normal_mid[w.gslice]
    return v


def lift_stokes(g: BoundaryData, saddle: Optional[StokesSaddle] = None) -> FlowField:
    """Divergence-free extension of full Dirichlet boundary data."""
    s = saddle if saddle is not None else StokesSaddle(g.grid)
    f, _ = s.solve(g)
    return f


# ---------------------------------------------------------------------------
# Stokes eigenbasis via the stream-function pencil
# ---------------------------------------------------------------------------

@dataclass
class StokesBasis:
    """Leading eigenfields of the Stokes operator with no-slip walls.

    ``E`` stacks full face arrays columnwise (boundary faces zero), mass
    orthonormal; ``alpha`` ascending; ``q`` the paired pressure fields.
    """

    grid: RectDomain
    nu: float
    N_gal: int
    E: np.ndarray            # (n_u + n_v, N_gal)
    alpha: np.ndarray
    q: np.ndarray            # (n_cells, N_gal)
    mass: np.ndarray = field(repr=False)

    def mode(self, i: int) -> FlowField:
        return field_from_flat(self.grid, self.E[:, i])


def curl_matrix(grid: RectDomain) -> sp.csr_matrix:
    """Map interior vertex stream values to interior faces (u, v) stacked."""
    nx, ny = grid.nx, grid.ny
    n_psi = (nx - 1) * (ny - 1)
    ids = -np.ones((nx + 1, ny + 1), dtype=int)
    ids[1:nx, 1:ny] = np.arange(n_psi).reshape(nx - 1, ny - 1)
    rows, cols, vals = [], [], []
    idu = _interior_u_ids(grid)
    for i in range(1, nx):
        for j in range(ny):
            k = idu[i, j]
            for (jj, s) in ((j + 1, 1.0), (j, -1.0)):
                kk = ids[i, jj]
                if kk >= 0:
                    rows.append(k); cols.append(kk); vals.append(s / grid.hy)
    nu_int = (nx - 1) * ny
    idv = _interior_v_ids(grid)
    for i in range(nx):
        for j in range(1, ny):
            k = idv[i, j] + nu_int
            for (ii, s) in ((i + 1, -1.0), (i, 1.0)):
                kk = ids[ii, j]
                if kk >= 0:
                    rows.append(k); cols.append(kk); vals.append(s / grid.hx)
    n_int = nu_int + nx * (ny - 1)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_int, n_psi))


def stokes_eigenbasis(N_gal: int, grid: RectDomain, nu: float,
                      projector: Optional[LerayProjector] = None) -> StokesBasis:
    """Leading ``N_gal`` eigenpairs of the projected Stokes operator.

    The pencil is solved in stream-function variables, so every eigenfield is
    discretely divergence free with exactly zero boundary trace.  Fails with
    a residual report if the iteration does not converge.
    """
    nx, ny = grid.nx, grid.ny
    n_int = (nx - 1) * ny + nx * (ny - 1)
    if N_gal < 1:
        raise ValueError("N_gal must be positive")
    if N_gal > n_int // 4:
        raise ValueError("N_gal too large: must be at most a quarter of the "
                         f"interior face count ({n_int})")
    C = curl_matrix(grid)
    A = sp.block_diag([stiffness_u(grid), stiffness_v(grid)], format="csr")
    A_psi = (C.T @ (nu * A) @ C).tocsc()
    M_psi = (C.T @ (grid.cell_volume * sp.eye(C.shape[0], format="csr")) @ C).tocsc()
    A_psi = 0.5 * (A_psi + A_psi.T)
    M_psi = 0.5 * (M_psi + M_psi.T)
    n_psi = A_psi.shape[0]
    if N_gal >= n_psi:
        raise ValueError("N_gal exceeds the stream-function dimension")
    v0 = np.full(n_psi, 1.0 / np.sqrt(n_psi))
    try:
        vals, vecs = spla.eigsh(A_psi, k=N_gal, M=M_psi, sigma=0.0,
                                which="LM", v0=v0, maxiter=5000)
    except spla.ArpackNoConvergence as exc:  # pragma: no cover - defensive
        raise RuntimeError(f"Stokes eigensolver did not converge: {exc}") from exc
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    n_faces = grid.n_u + grid.n_v
    E = np.zeros((n_faces, N_gal))
    faces_int = C @ vecs  # (n_int, N)
    nu_int = (nx - 1) * ny
    for k in range(N_gal):
        f = embed_interior(grid, faces_int[:nu_int, k], faces_int[nu_int:, k])
        E[:, k] = f.flat()
    mass = mass_vector(grid)
    # enforce a deterministic sign: first sufficiently large entry positive
    for k in range(N_gal):
        col = E[:, k]
        idx = np.argmax(np.abs(col))
        if col[idx] < 0:
            E[:, k] = -col
    pr = projector if projector is not None else LerayProjector(grid)
    q = np.zeros((grid.n_cells, N_gal))
    for k in range(N_gal):
        e = field_from_flat(grid, E[:, k])
        w = laplacian(e)  # zero-trace closure
        minus_nu_lap = FlowField(grid, -nu * w.u, -nu * w.v, BoundaryData.zero(grid))
        # projection subtracts grad p; the strong-form pressure is its negative
        q[:, k] = -pr.pressure(minus_nu_lap).ravel()
    return StokesBasis(grid=grid, nu=nu, N_gal=N_gal, E=E,
                       alpha=np.asarray(vals, dtype=float), q=q, mass=mass)


def eigen_residual(B: StokesBasis, i: int,
                   projector: Optional[LerayProjector] = None) -> float:
    """Relative residual of mode i against the projected Stokes operator."""
    grid = B.grid
    pr = projector if projector is not None else LerayProjector(grid)
    e = B.mode(i)
    w = laplacian(e)
    minus_nu_lap = FlowField(grid, -B.nu * w.u, -B.nu * w.v, BoundaryData.zero(grid))
    Le, _ = pr.project(minus_nu_lap)
    diff = FlowField(grid, Le.u - B.alpha[i] * e.u, Le.v - B.alpha[i] * e.v,
                     BoundaryData.zero(grid))
    return l2_norm(diff) / (B.alpha[i] * l2_norm(e))


def project_reduced(v: FlowField, B: StokesBasis) -> np.ndarray:
    """Galerkin coordinates of the solenoidal part of ``v``.

    Eigenfields are mass-orthogonal to discrete gradients, so the projection
    of ``v`` and of its Leray part coincide; no Poisson solve is needed.
    """
    return B.E.T @ (B.mass * v.flat())


def reconstruct(x: np.ndarray, B: StokesBasis) -> FlowField:
    return field_from_flat(B.grid, B.E @ np.asarray(x, dtype=float))
