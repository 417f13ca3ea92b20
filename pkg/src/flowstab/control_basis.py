"""Finite-dimensional boundary control map and its coordinate algebra.

The control map sends a coefficient vector to a boundary velocity field
supported in the cutoff region of one wall: the first group of coefficients
drives cutoff-weighted normal sine modes (each corrected to have zero average
against the cutoff direction, which enforces the zero-net-flux compatibility
of every control field), the second group drives cutoff-weighted tangential
sine modes.

Because the normal and tangential column groups occupy orthogonal trace
components, the kernel of the map splits along the coordinate groups; the
kernel and its projectors are computed blockwise from singular value
decompositions of the quadrature-weighted sample matrices, which makes the
projector/coordinate-group commutation identities hold to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import ControlPatch, RectDomain
from .field_ops import BoundaryData, FlowField


@dataclass
class ControlBasis:
    """Sampled control columns, kernel space, and coordinate projectors."""

    grid: RectDomain
    patch: ControlPatch
    M: int
    n_f: int                      # normal columns
    n_l: int                      # tangential columns
    mode_indices: np.ndarray      # sine indices used for both groups
    Xi: np.ndarray = field(repr=False)         # (2*n_bnd, n_cols): [normal; tangential] rows
    Xi_tan_nodes: np.ndarray = field(repr=False)  # (n_wall_nodes, n_cols) on the patch wall
    w_bnd: np.ndarray = field(repr=False)      # boundary quadrature weights
    proj_coeffs: np.ndarray = field(repr=False)  # cutoff-correction coefficient per normal mode
    svd_tol: float = 1e-10
    ker_basis: np.ndarray = field(default=None, repr=False)   # (n_cols, dim_N)
    P_N: np.ndarray = field(default=None, repr=False)
    P_Nperp: np.ndarray = field(default=None, repr=False)
    Q_f: np.ndarray = field(default=None, repr=False)
    Q_l: np.ndarray = field(default=None, repr=False)
    V_perp: np.ndarray = field(default=None, repr=False)      # (n_cols, n_perp)
    sigma_f: np.ndarray = field(default=None, repr=False)
    sigma_l: np.ndarray = field(default=None, repr=False)
    _svd_f: tuple = field(default=None, repr=False)

    @property
    def n_cols(self) -> int:
        return self.n_f + self.n_l

    @property
    def dim_N(self) -> int:
        return 0 if self.ker_basis is None else self.ker_basis.shape[1]

    @property
    def n_perp(self) -> int:
        return self.n_cols - self.dim_N

    @property
    def n_bnd(self) -> int:
        return self.grid.n_bnd

    def normal_profile(self, kappa: np.ndarray) -> np.ndarray:
        return self.Xi[:self.n_bnd] @ np.asarray(kappa, dtype=float)

    def tangential_profile(self, kappa: np.ndarray) -> np.ndarray:
        return self.Xi[self.n_bnd:] @ np.asarray(kappa, dtype=float)

    def boundary_data(self, kappa: np.ndarray) -> BoundaryData:
        """Boundary record of the control field for coefficients ``kappa``."""
        kappa = np.asarray(kappa, dtype=float)
        bd = BoundaryData.zero(self.grid)
        bd.normal_mid = self.normal_profile(kappa)
        bd.tan_mid = self.tangential_profile(kappa)
        bd.tan_nodes[self.patch.wall] = self.Xi_tan_nodes @ kappa
        return bd

    def kappa_full(self, coords: np.ndarray) -> np.ndarray:
        """Coefficients in R^{n_cols} from effective-coordinate values."""
        return self.V_perp @ np.asarray(coords, dtype=float)

    def coords_of(self, kappa: np.ndarray) -> np.ndarray:
        return self.V_perp.T @ np.asarray(kappa, dtype=float)

    @property
    def Q_f_coords(self) -> np.ndarray:
        return self.V_perp.T @ self.Q_f @ self.V_perp

    def net_flux_of(self, kappa: np.ndarray) -> float:
        return float(np.dot(self.grid.bnd_h, self.normal_profile(kappa)))


def _mode_profile(patch: ControlPatch, grid: RectDomain, index: int,
                  coords: np.ndarray) -> np.ndarray:
    """Dirichlet sine on the mode window, extended by zero."""
    L = patch.o_length
    out = np.zeros_like(coords)
    inside = (coords > patch.a_O) & (coords < patch.b_O)
    out[inside] = np.sqrt(2.0 / L) * np.sin(index * np.pi * (coords[inside] - patch.a_O) / L)
    return out


def build_xi(M: int, patch: ControlPatch, grid: RectDomain,
             mode_indices: Optional[Sequence[int]] = None,
             svd_tol: float = 1e-10) -> ControlBasis:
    """Assemble the boundary control columns and their kernel algebra.

    ``mode_indices`` selects which sine modes enter (default ``1..M``); both
    the normal and the tangential group use the same profiles.  Raises if the
    highest mode is not resolved by at least four wall nodes per wavelength.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    idx = np.asarray(mode_indices if mode_indices is not None else
                     np.arange(1, M + 1), dtype=int)
    if len(idx) != M:
        raise ValueError("mode_indices must list exactly M mode numbers")
    wall = grid.wall(patch.wall)
    n_bnd = grid.n_bnd
    if 2 * M > n_bnd:
        raise ValueError("more control columns than boundary samples")
    wavelength = 2.0 * patch.o_length / float(np.max(idx))
    if wavelength / wall.h < 4.0:
        raise ValueError("under-resolved boundary mode: refine the grid or lower M")

    mids = wall.mids
    h = wall.h
    chi = patch.chi_mid
    chi_sq = float(np.sum(chi * chi) * h)
    if chi_sq <= 0.0:
        raise ValueError("cutoff vanishes identically on the wall")

    n_cols = 2 * M
    Xi = np.zeros((2 * n_bnd, n_cols))
    Xi_tan_nodes = np.zeros((wall.n_seg + 1, n_cols))
    coeffs = np.zeros(M)
    sl = wall.gslice
    chi_nodes = patch.chi_nodes
    for k, i in enumerate(idx):
        prof = _mode_profile(patch, grid, i, mids)
        c = float(np.sum(prof * chi) * h) / chi_sq
        coeffs[k] = c
        Xi[np.arange(n_bnd)[sl], k] = chi * (prof - c * chi)
        # tangential group: cutoff times the same sine profile
        Xi[n_bnd + np.arange(n_bnd)[sl], M + k] = chi * prof
        prof_nodes = _mode_profile(patch, grid, i, wall.nodes)
        Xi_tan_nodes[:, M + k] = chi_nodes * prof_nodes

    w_bnd = grid.bnd_h
    basis = ControlBasis(grid=grid, patch=patch, M=M, n_f=M, n_l=M,
                         mode_indices=idx, Xi=Xi, Xi_tan_nodes=Xi_tan_nodes,
                         w_bnd=w_bnd, proj_coeffs=coeffs, svd_tol=svd_tol)
    return compute_nullspace(basis)


def compute_nullspace(basis: ControlBasis) -> ControlBasis:
    """Kernel, projectors and effective coordinates from blockwise SVDs.

    A coefficient vector is in the kernel iff its normal and tangential parts
    are separately annihilated, so the kernel basis is assembled per group;
    the resulting projectors commute with the coordinate-group projectors
    exactly.  An empty kernel is valid and leaves the identity projector.
    """
    n_bnd = basis.n_bnd
    n_cols = basis.n_cols
    sqw = np.sqrt(np.concatenate([basis.w_bnd, basis.w_bnd]))
    B = sqw[:, None] * basis.Xi
    Bf = B[:, :basis.n_f]
    Bl = B[:, basis.n_f:]

    # boundary samples always outnumber columns, so the economy SVD still
    # carries the complete right factor needed for the kernel
    Uf, sf, Vtf = np.linalg.svd(Bf, full_matrices=False)
    if basis.n_l > 0:
        Ul, sl_, Vtl = np.linalg.svd(Bl, full_matrices=False)
    else:
        sl_ = np.zeros(0)
        Vtl = np.zeros((0, 0))
    smax = max(float(sf[0]) if sf.size else 0.0,
               float(sl_[0]) if sl_.size else 0.0)
    cut = basis.svd_tol * smax

    def split(Vt, s, n):
        keep = s > cut
        rng = Vt[:len(s)][keep].T if s.size else np.zeros((n, 0))
        null_rows = [Vt[i] for i in range(len(s)) if not keep[i]]
        null_rows += [Vt[i] for i in range(len(s), n)]
        nul = np.array(null_rows).T if null_rows else np.zeros((n, 0))
        return rng, nul

    rng_f, nul_f = split(Vtf, sf, basis.n_f)
    rng_l, nul_l = split(Vtl, sl_, basis.n_l)

    def embed(block, which):
        out = np.zeros((n_cols, block.shape[1]))
        if which == "f":
            out[:basis.n_f] = block
        else:
            out[basis.n_f:] = block
        return out

    ker = np.hstack([embed(nul_f, "f"), embed(nul_l, "l")])
    V_perp = np.hstack([embed(rng_f, "f"), embed(rng_l, "l")])
    if ker.shape[1] == 0:
        P_N = np.zeros((n_cols, n_cols))
    else:
        P_N = ker @ ker.T
    P_Nperp = np.eye(n_cols) - P_N
    Q_f = np.zeros((n_cols, n_cols))
    Q_f[np.arange(basis.n_f), np.arange(basis.n_f)] = 1.0
    Q_l = np.eye(n_cols) - Q_f
    # empty-kernel convention: effective coordinates are the raw coefficients
    if ker.shape[1] == 0:
        V_perp = np.eye(n_cols)

    basis.ker_basis = ker
    basis.P_N = P_N
    basis.P_Nperp = P_Nperp
    basis.Q_f = Q_f
    basis.Q_l = Q_l
    basis.V_perp = V_perp
    basis.sigma_f = sf
    basis.sigma_l = sl_
    basis._svd_f = (Uf, sf, Vtf)
    return basis


def z_of_normal_trace(u: FlowField, basis: ControlBasis,
                      rtol: float = 1e-6) -> np.ndarray:
    """Coefficients whose normal control profile matches the trace of ``u``.

    Weighted least squares against the normal column group, restricted to the
    effective coordinates; raises when the relative residual exceeds ``rtol``
    (the trace is then not in the control range).
    """
    g = u.bc.normal_mid
    sqw = np.sqrt(np.concatenate([basis.w_bnd, basis.w_bnd]))
    rhs = sqw * np.concatenate([g, np.zeros(basis.n_bnd)])
    Uf, sf, Vtf = basis._svd_f
    smax = float(sf[0]) if sf.size else 0.0
    cut = basis.svd_tol * smax if smax > 0 else 0.0
    keep = sf > cut
    coef = np.zeros(basis.n_f)
    if np.any(keep):
        proj = Uf[:, :len(sf)].T @ rhs
        coef = Vtf[:len(sf)][keep].T @ (proj[keep] / sf[keep])
    z = np.zeros(basis.n_cols)
    z[:basis.n_f] = coef
    resid = np.linalg.norm(rhs - (sqw[:, None] * basis.Xi) @ z)
    scale = np.linalg.norm(rhs)
    if scale > 1e-14 and resid / scale > rtol:
        raise ValueError("trace not in control range: relative residual "
                         f"{resid / scale:.3e}")
    return z


def min_singular_on_perp(basis: ControlBasis) -> float:
    """Smallest retained singular value of the weighted sample matrix."""
    vals = []
    if basis.sigma_f.size:
        smax = max(float(basis.sigma_f[0]),
                   float(basis.sigma_l[0]) if basis.sigma_l.size else 0.0)
        cut = basis.svd_tol * smax
        vals += [s for s in basis.sigma_f if s > cut]
        vals += [s for s in basis.sigma_l if s > cut]
    return float(min(vals)) if vals else 0.0
