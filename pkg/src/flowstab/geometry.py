"""Rectangular staggered-grid geometry with an arc-length boundary chart.

The domain is the rectangle ``[0, Lx] x [0, Ly]`` discretized by a MAC grid:
pressure unknowns live at cell centers, the horizontal velocity ``u`` on
vertical faces and the vertical velocity ``v`` on horizontal faces.  The
boundary is a single closed polyline traversed counterclockwise starting from
the origin; each wall additionally carries a local coordinate (distance from
the wall's counterclockwise start) so that control patches can be described
on one wall without reference to the global chart.

Boundary samples are taken at segment midpoints, which for the two wall
components coincide with the positions of the wall-normal velocity faces.
Integration over the boundary uses segment lengths as quadrature weights,
which is exact for constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

WALL_ORDER = ("bottom", "right", "top", "left")


@dataclass(frozen=True)
class Wall:
    """One side of the rectangle, with its counterclockwise chart.

    ``mids``/``nodes`` are wall-local coordinates of segment midpoints and
    endpoints in counterclockwise order.  ``gslice`` locates this wall's
    midpoints inside the global boundary arrays.  ``normal_comp``,
    ``normal_ij`` and ``normal_sign`` map each midpoint to the staggered
    velocity face sitting on the wall (outward-normal component =
    sign * face value).  ``tan_nodes_local`` gives, indexed like the
    tangential velocity array along the wall, the wall-local coordinate of
    each node; ``tan_sign`` converts a tangential scalar into the Cartesian
    array component.
    """

    name: str
    length: float
    h: float
    n_seg: int
    mids: np.ndarray
    nodes: np.ndarray
    normal: np.ndarray
    tangent: np.ndarray
    gslice: slice
    normal_comp: str            # 'u' or 'v': array holding the wall-normal faces
    normal_ij: tuple            # (i_idx, j_idx) arrays in CCW midpoint order
    normal_sign: float
    tan_nodes_local: np.ndarray  # local coord of node k of the tangential array
    tan_sign: float


@dataclass(frozen=True)
class RectDomain:
    """MAC discretization of a rectangle plus its boundary chart."""

    Lx: float
    Ly: float
    nx: int
    ny: int
    hx: float
    hy: float
    walls: dict = field(repr=False)
    bnd_wall: np.ndarray = field(repr=False)   # wall name per boundary midpoint
    bnd_h: np.ndarray = field(repr=False)      # quadrature weight (segment length)
    bnd_s: np.ndarray = field(repr=False)      # global arc coordinate of midpoints
    bnd_xy: np.ndarray = field(repr=False)     # midpoint coordinates, shape (n, 2)
    bnd_normal: np.ndarray = field(repr=False)
    bnd_tangent: np.ndarray = field(repr=False)

    @property
    def n_bnd(self) -> int:
        return 2 * (self.nx + self.ny)

    @property
    def perimeter(self) -> float:
        return float(np.sum(self.bnd_h))

    @property
    def cell_volume(self) -> float:
        return self.hx * self.hy

    @property
    def shape_u(self):
        return (self.nx + 1, self.ny)

    @property
    def shape_v(self):
        return (self.nx, self.ny + 1)

    @property
    def n_u(self) -> int:
        return (self.nx + 1) * self.ny

    @property
    def n_v(self) -> int:
        return self.nx * (self.ny + 1)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def wall(self, name: str) -> Wall:
        return self.walls[name]

    def coords_u(self):
        """x and y coordinates of the u-face nodes, meshgrid-shaped."""
        x = np.arange(self.nx + 1) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def coords_v(self):
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = np.arange(self.ny + 1) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    def coords_p(self):
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")


def build_domain(Lx: float, Ly: float, nx: int, ny: int) -> RectDomain:
    """Build the staggered grid and its boundary chart.

    Raises ``ValueError`` for non-positive lengths or cell counts.
    """
    if nx <= 0 or ny <= 0:
        raise ValueError("empty grid: nx and ny must be positive")
    if Lx <= 0 or Ly <= 0:
        raise ValueError("domain lengths must be positive")
    nx, ny = int(nx), int(ny)
    hx, hy = Lx / nx, Ly / ny

    walls = {}
    offset = 0

    def add(name, length, h, n_seg, normal, tangent,
            normal_comp, normal_ij, normal_sign, tan_nodes_local, tan_sign):
        nonlocal offset
        mids = (np.arange(n_seg) + 0.5) * h
        nodes = np.arange(n_seg + 1) * h
        walls[name] = Wall(
            name=name, length=length, h=h, n_seg=n_seg,
            mids=mids, nodes=nodes,
            normal=np.asarray(normal, dtype=float),
            tangent=np.asarray(tangent, dtype=float),
            gslice=slice(offset, offset + n_seg),
            normal_comp=normal_comp, normal_ij=normal_ij,
            normal_sign=normal_sign,
            tan_nodes_local=np.asarray(tan_nodes_local, dtype=float),
            tan_sign=tan_sign,
        )
        offset += n_seg

    i_up = np.arange(nx)
    j_up = np.arange(ny)
    # bottom: x increasing, outward normal (0,-1); normal faces v[i,0], v.n = -v
    add("bottom", Lx, hx, nx, (0.0, -1.0), (1.0, 0.0),
        "v", (i_up, np.zeros(nx, dtype=int)), -1.0,
        np.arange(nx + 1) * hx, +1.0)
    # right: y increasing, outward normal (1,0); normal faces u[nx,j], u.n = +u
    add("right", Ly, hy, ny, (1.0, 0.0), (0.0, 1.0),
        "u", (np.full(ny, nx, dtype=int), j_up), +1.0,
        np.arange(ny + 1) * hy, +1.0)
    # top: x decreasing, outward normal (0,1); normal faces v[i,ny], v.n = +v
    add("top", Lx, hx, nx, (0.0, 1.0), (-1.0, 0.0),
        "v", (i_up[::-1].copy(), np.full(nx, ny, dtype=int)), +1.0,
        Lx - np.arange(nx + 1) * hx, -1.0)
    # left: y decreasing, outward normal (-1,0); normal faces u[0,j], u.n = -u
    add("left", Ly, hy, ny, (-1.0, 0.0), (0.0, -1.0),
        "u", (np.zeros(ny, dtype=int), j_up[::-1].copy()), -1.0,
        Ly - np.arange(ny + 1) * hy, -1.0)

    n = offset
    bnd_wall = np.empty(n, dtype=object)
    bnd_h = np.empty(n)
    bnd_s = np.empty(n)
    bnd_xy = np.empty((n, 2))
    bnd_normal = np.empty((n, 2))
    bnd_tangent = np.empty((n, 2))
    arc0 = {"bottom": 0.0, "right": Lx, "top": Lx + Ly, "left": 2 * Lx + Ly}
    corner = {"bottom": (0.0, 0.0), "right": (Lx, 0.0),
              "top": (Lx, Ly), "left": (0.0, Ly)}
    for name in WALL_ORDER:
        w = walls[name]
        sl = w.gslice
        bnd_wall[sl] = name
        bnd_h[sl] = w.h
        bnd_s[sl] = arc0[name] + w.mids
        x0, y0 = corner[name]
        bnd_xy[sl, 0] = x0 + w.tangent[0] * w.mids
        bnd_xy[sl, 1] = y0 + w.tangent[1] * w.mids
        bnd_normal[sl] = w.normal
        bnd_tangent[sl] = w.tangent

    return RectDomain(Lx=Lx, Ly=Ly, nx=nx, ny=ny, hx=hx, hy=hy, walls=walls,
                      bnd_wall=bnd_wall, bnd_h=bnd_h, bnd_s=bnd_s,
                      bnd_xy=bnd_xy, bnd_normal=bnd_normal,
                      bnd_tangent=bnd_tangent)


@dataclass(frozen=True)
class ControlPatch:
    """Actuated boundary region: cutoff support inside a mode window.

    The cutoff ``chi`` vanishes outside ``[a_c, b_c]`` and is positive inside;
    the open mode window ``(a_O, b_O)`` strictly contains the cutoff support.
    All coordinates are wall-local.  ``chi``/``dchi``/``d2chi`` are callables
    on the wall-local coordinate; sampled values at the wall's segment
    midpoints and nodes are precomputed.
    """

    wall: str
    a_c: float
    b_c: float
    a_O: float
    b_O: float
    eps_chi: float
    chi: Callable = field(repr=False)
    dchi: Optional[Callable] = field(repr=False)
    d2chi: Optional[Callable] = field(repr=False)
    chi_mid: np.ndarray = field(repr=False)     # chi at wall segment midpoints
    chi_nodes: np.ndarray = field(repr=False)   # chi at wall nodes
    o_mask_mid: np.ndarray = field(repr=False)  # midpoints inside (a_O, b_O)

    @property
    def o_length(self) -> float:
        return self.b_O - self.a_O


def _validate_patch_intervals(grid: RectDomain, wall: str,
                              a_c, b_c, a_O, b_O) -> None:
    if wall not in WALL_ORDER:
        raise ValueError(f"unknown wall {wall!r}")
    L = grid.wall(wall).length
    if not (a_O < a_c < b_c < b_O):
        raise ValueError("patch intervals out of order: need a_O < a_c < b_c < b_O")
    if a_O < 0.0 or b_O > L:
        raise ValueError("patch crosses a corner: mode window must stay on one wall")


def make_patch(grid: RectDomain, wall: str, a_c: float, b_c: float,
               a_O: float, b_O: float, chi: Callable,
               dchi: Optional[Callable] = None,
               d2chi: Optional[Callable] = None,
               eps_chi: float = 1e-6) -> ControlPatch:
    """Assemble a ControlPatch from an explicit cutoff profile."""
    _validate_patch_intervals(grid, wall, a_c, b_c, a_O, b_O)
    w = grid.wall(wall)
    chi_v = np.vectorize(chi, otypes=[float])
    chi_mid = chi_v(w.mids)
    chi_nodes = chi_v(w.nodes)
    o_mask = (w.mids > a_O) & (w.mids < b_O)
    # sign-indefinite profiles are allowed; only degeneracy is rejected
    if not np.any(np.abs(chi_mid[o_mask]) >= eps_chi):
        raise ValueError("cutoff does not reach eps_chi anywhere on the control patch")
    return ControlPatch(wall=wall, a_c=a_c, b_c=b_c, a_O=a_O, b_O=b_O,
                        eps_chi=eps_chi, chi=chi, dchi=dchi, d2chi=d2chi,
                        chi_mid=chi_mid, chi_nodes=chi_nodes, o_mask_mid=o_mask)


def build_cutoff(grid: RectDomain, wall: str = "bottom",
                 a_c: float = 0.30, b_c: float = 0.60,
                 a_O: float = 0.20, b_O: float = 0.70,
                 eps_chi: float = 1e-6) -> ControlPatch:
    """Sextic bump cutoff ``(1 - xi^2)^3`` supported on ``[a_c, b_c]``.

    The profile and its first two derivatives vanish at the support
    endpoints, so the extension by zero is twice continuously
    differentiable along the wall.
    """
    _validate_patch_intervals(grid, wall, a_c, b_c, a_O, b_O)
    mid = 0.5 * (a_c + b_c)
    half = 0.5 * (b_c - a_c)
    dxi = 1.0 / half

    def chi(x):
        xi = (x - mid) * dxi
        if abs(xi) >= 1.0:
            return 0.0
        return (1.0 - xi * xi) ** 3

    def dchi(x):
        xi = (x - mid) * dxi
        if abs(xi) >= 1.0:
            return 0.0
        return -6.0 * xi * (1.0 - xi * xi) ** 2 * dxi

    def d2chi(x):
        xi = (x - mid) * dxi
        if abs(xi) >= 1.0:
            return 0.0
        return (-6.0 * (1.0 - xi * xi) ** 2 + 24.0 * xi * xi * (1.0 - xi * xi)) * dxi * dxi

    return make_patch(grid, wall, a_c, b_c, a_O, b_O, chi, dchi, d2chi, eps_chi)


def boundary_integral(grid: RectDomain, values: np.ndarray) -> float:
    """Quadrature of a midpoint-sampled scalar over the whole boundary."""
    return float(np.dot(grid.bnd_h, values))
