"""Configuration-driven assembly of the synthesis and simulation objects."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .geometry import build_domain, build_cutoff
from .control_basis import build_xi
from .field_ops import (FlowField, StokesSaddle, lift_stokes, reconstruct,
                        stokes_eigenbasis)
from .flow_models import ReferenceTrajectory, assemble_reduced
from .riccati import build_extended, solve_dre
from . import io_csv


@dataclass
class Setup:
    cfg: RunConfig
    grid: object
    patch: object
    basis: object
    ref: object
    stokes: object
    model: object
    extsys: object = None
    gain: object = None


def build_geometry(cfg: RunConfig):
    grid = build_domain(cfg["domain.Lx"], cfg["domain.Ly"],
                        cfg["domain.nx"], cfg["domain.ny"])
    patch = build_cutoff(grid, cfg["patch.wall"], cfg["patch.a_c"],
                         cfg["patch.b_c"], cfg["patch.a_O"], cfg["patch.b_O"],
                         cfg["patch.eps_chi"])
    return grid, patch


def build_reference(cfg: RunConfig, grid) -> ReferenceTrajectory:
    kind = cfg["reference.kind"]
    if kind == "csv":
        ts, fields = io_csv.load_reference_table(cfg["reference.path"], grid)
        return ReferenceTrajectory(grid, "csv", samples=(ts, fields))
    return ReferenceTrajectory(grid, kind, a0=cfg["reference.a0"],
                               omega=cfg["reference.omega"])


def sample_grid(cfg: RunConfig, ref: ReferenceTrajectory) -> np.ndarray:
    if ref.autonomous:
        return np.array([0.0])
    horizon = max(cfg.synthesis_T, cfg["simulation.T_sim"])
    dt = cfg["reference.dt_table"]
    return np.arange(0.0, horizon + dt, dt)


def build_setup(cfg: RunConfig, stokes=None) -> Setup:
    grid, patch = build_geometry(cfg)
    basis = build_xi(cfg["bases.M"], patch, grid, svd_tol=cfg["bases.svd_tol"])
    ref = build_reference(cfg, grid)
    if stokes is None:
        stokes = stokes_eigenbasis(cfg["bases.N_gal"], grid, cfg["physics.nu"])
    model = assemble_reduced(ref, stokes, basis, sample_grid(cfg, ref),
                             cfg["physics.nu"])
    return Setup(cfg=cfg, grid=grid, patch=patch, basis=basis, ref=ref,
                 stokes=stokes, model=model)


def synthesize(cfg: RunConfig, out_dir=None, stokes=None) -> Setup:
    """Build bases, model and gain; optionally persist the caches."""
    setup = build_setup(cfg, stokes=stokes)
    lam = cfg["physics.lam"]
    setup.extsys = build_extended(setup.model, lam)
    setup.gain = solve_dre(setup.extsys, cfg.synthesis_T,
                           dt_R=cfg.synthesis_dt_R)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        io_csv.save_stokes(os.path.join(out_dir, "eig"), setup.stokes, cfg.hash)
        io_csv.save_basis_export(os.path.join(out_dir, "basis"), setup.basis, cfg.hash)
        io_csv.save_gain(os.path.join(out_dir, "gain"), setup.gain, cfg.hash)
        R0 = setup.gain.R_tab[0]
        io_csv.write_json(os.path.join(out_dir, "synthesis.json"), {
            "config_hash": cfg.hash,
            "N_gal": setup.model.N_gal,
            "M": setup.basis.M,
            "dim_kernel": setup.basis.dim_N,
            "n_perp": setup.model.n_perp,
            "horizon": io_csv.fmt(cfg.synthesis_T),
            "dt_R": io_csv.fmt(cfg.synthesis_dt_R),
            "initial_kernel_norm": io_csv.fmt(float(np.linalg.norm(R0))),
            "feedback_norm_bound": io_csv.fmt(setup.gain.feedback_norm_bound()),
        })
    return setup


def load_synthesis(cfg: RunConfig, out_dir) -> Setup:
    """Rebuild the setup around cached eigenbasis and gain tables."""
    grid, patch = build_geometry(cfg)
    eig_dir = os.path.join(out_dir, "eig")
    gain_dir = os.path.join(out_dir, "gain")
    if not (os.path.isdir(eig_dir) and os.path.isdir(gain_dir)):
        raise FileNotFoundError(
            f"synthesis cache not found under {out_dir!r}; run "
            "'flowstab synthesize --config ...' first")
    stokes = io_csv.load_stokes(eig_dir, grid, cfg.hash)
    basis = build_xi(cfg["bases.M"], patch, grid, svd_tol=cfg["bases.svd_tol"])
    ref = build_reference(cfg, grid)
    model = assemble_reduced(ref, stokes, basis, sample_grid(cfg, ref),
                             cfg["physics.nu"])
    gain = io_csv.load_gain(gain_dir, cfg.hash)
    return Setup(cfg=cfg, grid=grid, patch=patch, basis=basis, ref=ref,
                 stokes=stokes, model=model, gain=gain)


def initial_condition(cfg: RunConfig, model, saddle=None):
    """Seeded eigen-mixture state with a trace-compatible full-order field."""
    rng = np.random.default_rng(cfg["simulation.seed"])
    if cfg["simulation.ic"] == "zero":
        x0 = np.zeros(model.N_gal)
        kc0 = np.zeros(model.n_perp)
    else:
        x0 = rng.standard_normal(model.N_gal)
        x0 *= cfg["simulation.ic_amplitude"] / max(np.linalg.norm(x0), 1e-30)
        kc0 = rng.standard_normal(model.n_perp)
        kc0 *= cfg["simulation.ic_kappa_amplitude"] / max(np.linalg.norm(kc0), 1e-30)
    bd = model.basis.boundary_data(model.basis.kappa_full(kc0))
    ve = reconstruct(x0, model.stokes)
    if np.any(bd.normal_mid) or np.any(bd.tan_mid):
        s = saddle or StokesSaddle(model.grid)
        vl = lift_stokes(bd, s)
        v0 = FlowField(model.grid, ve.u + vl.u, ve.v + vl.v, bd)
    else:
        v0 = FlowField(model.grid, ve.u, ve.v, bd)
    return x0, kc0, v0
