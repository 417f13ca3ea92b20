"""Closed-loop and open-loop time integrators, and the fixed-point map.

Two integrator families share the spatial operators of the model assembly:

* a fourth-order sweep of the reduced extended dynamics (coordinates plus
  control coefficients, rate from the synthesized feedback), and
* a semi-implicit full-order scheme: Crank-Nicolson diffusion with boundary
  injection, explicit (linearized and optionally quadratic) transport, and a
  pressure projection that re-imposes the control trace every step.

Control coefficients are bookkept exactly: every run stores the per-step
increments its own integrator produced, so the integral form of the boundary
control reproduces the pointwise form to round-off.  Divergence of the
nonlinear loop is a recorded outcome, not an exception.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .field_ops import (BoundaryData, FlowField, NeumannPoisson, divergence,
                        field_from_flat, h1_norm, interior_u, interior_v,
                        lap_u, lap_v, mass_vector, set_normal_faces,
                        stiffness_u, stiffness_v, _normal_only_u,
                        _normal_only_v)
from .flow_models import ReducedModel, conv_skew, linearized_convection
from .riccati import RiccatiGain

log = logging.getLogger(__name__)


@dataclass
class SimRun:
    """Recorded closed- or open-loop trajectory.

    ``X`` are Galerkin coordinates of the solenoidal part, ``Kc`` effective
    control coordinates, ``Kdot`` the recorded rates and ``dK`` the exact
    per-step increments produced by the integrator (``Kc[k] = Kc[0] +
    sum(dK[1:k+1])`` to round-off).  ``norm_Piv`` is the mass norm of the
    solenoidal part; for reduced runs ``norm_h1`` is the eigen-part
    surrogate.  ``status`` is ``"diverged"`` when the nonlinear loop left the
    trust region; the record then holds the partial history.
    """

    kind: str
    lam: float
    t: np.ndarray
    X: np.ndarray
    Kc: np.ndarray
    Kdot: np.ndarray
    dK: np.ndarray
    norm_Piv: np.ndarray
    norm_h1: np.ndarray
    norm_kappa: np.ndarray
    norm_rate: np.ndarray
    cost: np.ndarray
    status: str = "ok"
    snapshots: list = field(default_factory=list, repr=False)
    history: Optional[np.ndarray] = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    def fitted_decay_rate(self, series: str = "ext", window=(1.0, 10.0)) -> float:
        if series == "ext":
            vals = np.sqrt(np.sum(self.X ** 2, axis=1) + np.sum(self.Kc ** 2, axis=1))
        elif series == "piv":
            vals = self.norm_Piv
        elif series == "h1":
            vals = self.norm_h1
        else:
            raise ValueError(f"unknown series {series!r}")
        return fit_decay_rate(self.t, vals, window)

    def bookkeeping_defect(self) -> float:
        """Worst mismatch between Kc and the accumulated increments."""
        acc = self.Kc[0] + np.cumsum(self.dK, axis=0)
        return float(np.max(np.abs(acc - self.Kc)))


def fit_decay_rate(t: np.ndarray, vals: np.ndarray, window=(1.0, 10.0)) -> float:
    """Exponential rate from a log-linear fit inside a time window."""
    m = (t >= window[0]) & (t <= window[1]) & (vals > 0)
    if np.count_nonzero(m) < 2:
        return float("nan")
    coef = np.polyfit(t[m], np.log(vals[m]), 1)
    return float(-coef[0])


# ---------------------------------------------------------------------------
# reduced closed loop
# ---------------------------------------------------------------------------

def simulate_reduced_closedloop(model: ReducedModel, gain: RiccatiGain,
                                x0, kc0, T: float, dt: float = 1e-3,
                                snapshot_stride: int = 0) -> SimRun:
    """Fourth-order sweep of the reduced extended loop under the gain."""
    x = np.array(x0, dtype=float)
    kc = np.array(kc0, dtype=float)
    if x.shape != (model.N_gal,) or kc.shape != (model.n_perp,):
        raise ValueError("initial state dimensions do not match the model")
    n_steps = max(int(round(T / dt)), 1)
    h = T / n_steps
    lam = gain.lam
    scale0 = np.linalg.norm(x) + np.linalg.norm(kc) + 1.0

    def f(t, x, kc):
        rate = gain.feedback(t, x, kc)
        return model.rhs(t, x, kc), rate

    ts = np.empty(n_steps + 1)
    X = np.empty((n_steps + 1, model.N_gal))
    Kc = np.empty((n_steps + 1, model.n_perp))
    Kd = np.empty((n_steps + 1, model.n_perp))
    dK = np.zeros((n_steps + 1, model.n_perp))
    cost = np.zeros(n_steps + 1)
    ts[0], X[0], Kc[0] = 0.0, x, kc
    Kd[0] = gain.feedback(0.0, x, kc)

    def running(t, x, kc, rate):
        return np.exp(lam * t) * (x @ x + kc @ kc + rate @ rate)

    g_prev = running(0.0, x, kc, Kd[0])
    for k in range(n_steps):
        t = k * h
        k1x, k1k = f(t, x, kc)
        k2x, k2k = f(t + 0.5 * h, x + 0.5 * h * k1x, kc + 0.5 * h * k1k)
        k3x, k3k = f(t + 0.5 * h, x + 0.5 * h * k2x, kc + 0.5 * h * k2k)
        k4x, k4k = f(t + h, x + h * k3x, kc + h * k3k)
        dk = (h / 6.0) * (k1k + 2 * k2k + 2 * k3k + k4k)
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        kc = kc + dk
        if not np.isfinite(x).all() or np.linalg.norm(x) + np.linalg.norm(kc) > 1e6 * scale0:
            raise RuntimeError("reduced closed-loop integration unstable: "
                               "norm growth exceeded 1e6")
        ts[k + 1] = (k + 1) * h
        X[k + 1], Kc[k + 1], dK[k + 1] = x, kc, dk
        Kd[k + 1] = gain.feedback(ts[k + 1], x, kc)
        g_new = running(ts[k + 1], x, kc, Kd[k + 1])
        cost[k + 1] = cost[k] + 0.5 * h * (g_prev + g_new)
        g_prev = g_new

    alpha = model.stokes.alpha
    h1 = np.sqrt(np.sum(X ** 2 * (1.0 + alpha / model.nu)[None, :], axis=1))
    snaps = []
    if snapshot_stride > 0:
        for k in range(0, n_steps + 1, snapshot_stride):
            snaps.append((ts[k], model.reconstruct_full(X[k], Kc[k]).flat()))
    return SimRun(kind="reduced", lam=lam, t=ts, X=X, Kc=Kc, Kdot=Kd, dK=dK,
                  norm_Piv=np.linalg.norm(X, axis=1),
                  norm_h1=h1,
                  norm_kappa=np.linalg.norm(Kc, axis=1),
                  norm_rate=np.linalg.norm(Kd, axis=1),
                  cost=cost, snapshots=snaps,
                  meta={"dt": h, "model_kind": "reduced"})


# ---------------------------------------------------------------------------
# full-order semi-implicit loop
# ---------------------------------------------------------------------------

class _CNSolver:
    """Factorized Crank-Nicolson diffusion step for both components."""

    def __init__(self, grid, nu, dt):
        vol = grid.cell_volume
        Au = stiffness_u(grid)
        Av = stiffness_v(grid)
        half = 0.5 * dt * nu
        Iu = sp.eye(Au.shape[0], format="csr") * vol
        Iv = sp.eye(Av.shape[0], format="csr") * vol
        self.lhs_u = spla.splu((Iu + half * Au).tocsc())
        self.lhs_v = spla.splu((Iv + half * Av).tocsc())
        self.rhs_u = (Iu - half * Au).tocsr()
        self.rhs_v = (Iv - half * Av).tocsr()


def _bc_injection(grid, bc: BoundaryData):
    """Diffusion closure contribution of boundary data, interior faces."""
    iu = lap_u(grid, _normal_only_u(grid, bc), bc)
    iv = lap_v(grid, _normal_only_v(grid, bc), bc)
    return iu, iv


def simulate_full_linear(model: ReducedModel, gain: Optional[RiccatiGain],
                         v0: FlowField, kc0, T: float, dt: float = 2.5e-3,
                         lam: Optional[float] = None,
                         kappa_fn: Optional[Callable] = None,
                         snapshot_stride: int = 20,
                         store_history: bool = False) -> SimRun:
    """Linearized full-order loop; feedback or prescribed coefficients."""
    return _simulate_full(model, gain, v0, kc0, T, dt, lam=lam,
                          kappa_fn=kappa_fn, nonlinear=False, forcing=None,
                          snapshot_stride=snapshot_stride,
                          store_history=store_history, diverge="raise",
                          kind="linear")


def simulate_full_nonlinear(model: ReducedModel, gain: RiccatiGain,
                            v0: FlowField, kc0, T: float, dt: float = 2.5e-3,
                            lam: Optional[float] = None,
                            snapshot_stride: int = 20,
                            store_history: bool = False,
                            smallness_advisory: float = 0.5) -> SimRun:
    """Nonlinear perturbation loop under the synthesized feedback.

    Finite-time blow-up terminates the run with status ``"diverged"`` and a
    partial record; stabilization is only a local guarantee.
    """
    if h1_norm(v0) > smallness_advisory:
        log.warning("initial data larger than the smallness advisory (%.3g)",
                    smallness_advisory)
    return _simulate_full(model, gain, v0, kc0, T, dt, lam=lam,
                          kappa_fn=None, nonlinear=True, forcing=None,
                          snapshot_stride=snapshot_stride,
                          store_history=store_history, diverge="record",
                          kind="nonlinear")


def picard_map(zbar: SimRun, model: ReducedModel, gain: RiccatiGain,
               v0: FlowField, kc0, T: float, dt: float = 2.5e-3,
               lam: Optional[float] = None) -> SimRun:
    """Linear closed loop forced by the frozen self-transport of ``zbar``.

    ``zbar`` must carry a full field history on the same time grid that this
    run will use; the fixed points of the map are exactly the trajectories of
    the nonlinear scheme.
    """
    if zbar.history is None:
        raise ValueError("picard_map needs a run with a stored field history")
    n_steps = max(int(round(T / dt)), 1)
    if zbar.history.shape[0] < n_steps + 1:
        raise ValueError("frozen history shorter than the requested horizon")
    grid = model.grid
    basis = model.basis

    def forcing(k):
        z = field_from_flat(grid, zbar.history[k])
        bc = basis.boundary_data(basis.kappa_full(zbar.Kc[k]))
        set_normal_faces(z, bc)
        cu, cv = conv_skew(z, z.u, z.v, bc)
        return cu, cv

    return _simulate_full(model, gain, v0, kc0, T, dt, lam=lam,
                          kappa_fn=None, nonlinear=False, forcing=forcing,
                          snapshot_stride=0, store_history=True,
                          diverge="raise", kind="picard")


def _simulate_full(model: ReducedModel, gain, v0: FlowField, kc0, T, dt, *,
                   lam, kappa_fn, nonlinear, forcing, snapshot_stride,
                   store_history, diverge, kind) -> SimRun:
    grid = model.grid
    basis = model.basis
    stokes = model.stokes
    nu = model.nu
    lam = lam if lam is not None else (gain.lam if gain is not None else 0.0)
    kc = np.array(kc0, dtype=float)
    if kc.shape != (model.n_perp,):
        raise ValueError("control coordinates do not match the basis")

    bd0 = basis.boundary_data(basis.kappa_full(kc))
    scale = max(float(np.max(np.abs(bd0.normal_mid))),
                float(np.max(np.abs(bd0.tan_mid))), 1.0)
    if (np.max(np.abs(v0.bc.normal_mid - bd0.normal_mid)) > 1e-8 * scale
            or np.max(np.abs(v0.bc.tan_mid - bd0.tan_mid)) > 1e-8 * scale):
        raise ValueError("incompatible initial trace: v0 boundary record "
                         "does not match the control coefficients")

    n_steps = max(int(round(T / dt)), 1)
    h = T / n_steps
    cn = _CNSolver(grid, nu, h)
    poisson = NeumannPoisson(grid)
    mass = mass_vector(grid)
    ET_M = stokes.E.T * mass[None, :]
    vol = grid.cell_volume

    v = v0.copy()
    set_normal_faces(v, bd0)
    v.bc = bd0

    ts = np.empty(n_steps + 1)
    X = np.zeros((n_steps + 1, model.N_gal))
    Kc = np.zeros((n_steps + 1, model.n_perp))
    Kd = np.zeros((n_steps + 1, model.n_perp))
    dK = np.zeros((n_steps + 1, model.n_perp))
    nPiv = np.zeros(n_steps + 1)
    nH1 = np.zeros(n_steps + 1)
    cost = np.zeros(n_steps + 1)
    snaps = []
    history = np.zeros((n_steps + 1, grid.n_u + grid.n_v)) if store_history else None
    status = "ok"

    def rate_of(t, x, kc):
        if gain is not None:
            return gain.feedback(t, x, kc)
        return np.zeros(model.n_perp)

    def piv_norm(vflat, kc):
        w = vflat - model.lift @ kc
        return float(np.sqrt(np.dot(w, mass * w)))

    def record(k, t, v, kc, rate, dk):
        ts[k] = t
        X[k] = ET_M @ v.flat()
        Kc[k] = kc
        Kd[k] = rate
        dK[k] = dk
        nPiv[k] = piv_norm(v.flat(), kc)
        nH1[k] = h1_norm(v)
        if history is not None:
            history[k] = v.flat()
        if snapshot_stride and (k % snapshot_stride == 0):
            snaps.append((t, v.flat()))

    x = ET_M @ v.flat()
    r0 = rate_of(0.0, x, kc)
    record(0, 0.0, v, kc, r0, np.zeros_like(kc))
    g_prev = np.exp(0.0) * (nPiv[0] ** 2 + kc @ kc + r0 @ r0)
    last = 0

    for k in range(n_steps):
        t = k * h
        x = X[k]
        if kappa_fn is not None:
            kap_now = basis.coords_of(np.asarray(kappa_fn(t), dtype=float))
            kap_next = basis.coords_of(np.asarray(kappa_fn(t + h), dtype=float))
            rate = (kap_next - kap_now) / h
            dk = kap_next - kap_now
            kc_next = kap_next
        else:
            rate = rate_of(t, x, kc)
            dk = h * rate
            kc_next = kc + dk
        bc_n = v.bc
        bc_np1 = basis.boundary_data(basis.kappa_full(kc_next))

        ru = np.zeros(grid.shape_u)
        rv = np.zeros(grid.shape_v)
        if model.ref is not None and model.ref.kind != "zero":
            cu, cv = linearized_convection(model.ref.field(t), v.u, v.v, bc_n)
            ru += cu
            rv += cv
        if nonlinear:
            cu, cv = conv_skew(v, v.u, v.v, bc_n)
            ru += cu
            rv += cv
        if forcing is not None:
            fu, fv = forcing(k)
            ru += fu
            rv += fv

        inj_u_n, inj_v_n = _bc_injection(grid, bc_n)
        inj_u_p, inj_v_p = _bc_injection(grid, bc_np1)
        rhs_u = (cn.rhs_u @ interior_u(grid, v.u)
                 + h * vol * (0.5 * nu * interior_u(grid, inj_u_n + inj_u_p)
                              - interior_u(grid, ru)))
        rhs_v = (cn.rhs_v @ interior_v(grid, v.v)
                 + h * vol * (0.5 * nu * interior_v(grid, inj_v_n + inj_v_p)
                              - interior_v(grid, rv)))
        ui = cn.lhs_u.solve(rhs_u)
        vi = cn.lhs_v.solve(rhs_v)

        vstar = FlowField(grid, np.zeros(grid.shape_u), np.zeros(grid.shape_v), bc_np1)
        vstar.u[1:grid.nx, :] = ui.reshape(grid.nx - 1, grid.ny)
        vstar.v[:, 1:grid.ny] = vi.reshape(grid.nx, grid.ny - 1)
        set_normal_faces(vstar, bc_np1)
        phi = poisson.solve(divergence(vstar), np.zeros(grid.n_bnd),
                            check_compat=False)
        vstar.u[1:grid.nx, :] -= (phi[1:, :] - phi[:-1, :]) / grid.hx
        vstar.v[:, 1:grid.ny] -= (phi[:, 1:] - phi[:, :-1]) / grid.hy

        v = vstar
        kc = kc_next
        nrm = float(np.sqrt(np.dot(v.flat(), mass * v.flat())))
        if not np.isfinite(nrm) or nrm > 1e6:
            # the freshly stepped state is outside the trust region; the
            # record keeps the history up to the last valid step
            if diverge == "record":
                status = "diverged"
                last = k
                break
            raise RuntimeError(f"full-order integration diverged at t={t:.4g}")
        x_new = ET_M @ v.flat()
        r_new = rate_of((k + 1) * h, x_new, kc)
        record(k + 1, (k + 1) * h, v, kc, r_new, dk)
        g_new = np.exp(lam * ts[k + 1]) * (nPiv[k + 1] ** 2 + kc @ kc + r_new @ r_new)
        cost[k + 1] = cost[k] + 0.5 * h * (g_prev + g_new)
        g_prev = g_new
        last = k + 1

    sl = slice(0, last + 1)
    return SimRun(kind=kind, lam=lam, t=ts[sl], X=X[sl], Kc=Kc[sl],
                  Kdot=Kd[sl], dK=dK[sl], norm_Piv=nPiv[sl], norm_h1=nH1[sl],
                  norm_kappa=np.linalg.norm(Kc[sl], axis=1),
                  norm_rate=np.linalg.norm(Kd[sl], axis=1), cost=cost[sl],
                  status=status, snapshots=snaps,
                  history=history[sl] if history is not None else None,
                  meta={"dt": h, "model_kind": kind})


# ---------------------------------------------------------------------------
# fixed-point iteration and run functionals
# ---------------------------------------------------------------------------

def picard_iterate(model: ReducedModel, gain: RiccatiGain, v0: FlowField,
                   kc0, T: float, dt: float = 2.5e-3, tol: float = 1e-8,
                   max_iter: int = 40):
    """Iterate the frozen-transport map to its fixed point.

    Starts from the unforced linear loop and refreezes the quadratic term
    until successive iterates differ by at most ``tol`` in the windowed
    exponentially weighted norm.  Returns the fixed point and the recorded
    successive differences.
    """
    run = simulate_full_linear(model, gain, v0, kc0, T, dt, lam=gain.lam,
                               snapshot_stride=0, store_history=True)
    diffs = []
    for _ in range(max_iter):
        new = picard_map(run, model, gain, v0, kc0, T, dt, lam=gain.lam)
        d = z_norm_diff(new, run, model)
        diffs.append(d)
        run = new
        if d <= tol:
            return run, diffs
    raise RuntimeError(f"fixed-point iteration did not reach {tol:.1e}: "
                       f"last difference {diffs[-1]:.3e}")


def z_norm(run: SimRun, model: ReducedModel, lam: Optional[float] = None) -> float:
    """Sup over unit windows of the weighted H1 norm of the stored history."""
    if run.history is None:
        raise ValueError("windowed norm needs a stored field history")
    lam = lam if lam is not None else run.lam
    w = np.exp(0.5 * lam * run.t)
    vals = np.array([w[k] * _h1_of_flat(model, run.history[k], run.Kc[k])
                     for k in range(len(run.t))])
    return _window_sup(run.t, vals)


def z_norm_diff(r1: SimRun, r2: SimRun, model: ReducedModel) -> float:
    if r1.history is None or r2.history is None:
        raise ValueError("windowed norm needs stored field histories")
    n = min(len(r1.t), len(r2.t))
    lam = r1.lam
    w = np.exp(0.5 * lam * r1.t[:n])
    vals = np.array([w[k] * _h1_of_flat(model, r1.history[k] - r2.history[k],
                                        r1.Kc[k] - r2.Kc[k])
                     for k in range(n)])
    return _window_sup(r1.t[:n], vals)


def _h1_of_flat(model, flat, kc):
    f = field_from_flat(model.grid, flat)
    bc = model.basis.boundary_data(model.basis.kappa_full(kc))
    f.bc = bc
    return h1_norm(f)


def _window_sup(t, vals):
    sup = 0.0
    r = t[0]
    while r < t[-1] - 1e-12:
        m = (t >= r) & (t <= min(r + 1.0, t[-1]))
        if np.count_nonzero(m) >= 2:
            sq = np.trapezoid(vals[m] ** 2, t[m])
            sup = max(sup, np.sqrt(sq))
        else:
            sup = max(sup, float(np.max(vals[m])) if np.any(m) else 0.0)
        r += 1.0
    return float(sup)


def export_integral_feedback(run: SimRun, basis) -> dict:
    """Boundary control series in pointwise and integral form.

    Reconstructs the coefficients from the initial value plus the recorded
    increments and maps both forms through the control columns; the two must
    agree to the integrator's bookkeeping (round-off).  Also reports the
    worst net flux of the control trace.
    """
    Kc_rec = run.Kc[0] + np.cumsum(run.dK, axis=0)
    prof_direct = np.array([basis.normal_profile(basis.kappa_full(k)) for k in run.Kc])
    prof_rec = np.array([basis.normal_profile(basis.kappa_full(k)) for k in Kc_rec])
    tan_direct = np.array([basis.tangential_profile(basis.kappa_full(k)) for k in run.Kc])
    tan_rec = np.array([basis.tangential_profile(basis.kappa_full(k)) for k in Kc_rec])
    mismatch = max(float(np.max(np.abs(prof_direct - prof_rec))),
                   float(np.max(np.abs(tan_direct - tan_rec))))
    flux = np.array([np.dot(basis.grid.bnd_h, row) for row in prof_direct])
    return {"t": run.t, "zeta_normal": prof_direct, "zeta_tangential": tan_direct,
            "zeta_normal_integral_form": prof_rec,
            "mismatch": mismatch,
            "max_net_flux": float(np.max(np.abs(flux)))}
