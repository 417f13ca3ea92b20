"""Matrix-CSV and artifact persistence with full-precision round trips.

Matrix files start with a ``# rows cols`` header followed by comma-separated
rows; floats are written with the shortest representation that parses back
to the identical double, so reloaded artifacts reproduce computations bit
for bit.  Every artifact directory carries the configuration hash and load
refuses on mismatch.
"""

from __future__ import annotations

import json
import os

import numpy as np


def fmt(x) -> str:
    return repr(float(x))


def write_matrix(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {M.shape[0]} {M.shape[1]}\n")
        for row in M:
            fh.write(",".join(fmt(x) for x in row) + "\n")


def read_matrix(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing matrix header")
        rows, cols = (int(tok) for tok in header[1:].split())
        M = np.empty((rows, cols))
        for i in range(rows):
            parts = fh.readline().strip().split(",")
            if len(parts) != cols:
                raise ValueError(f"{path}: row {i} has {len(parts)} entries, "
                                 f"expected {cols}")
            M[i] = [float(p) for p in parts]
    return M


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


class StaleArtifact(Exception):
    """Artifact written under a different configuration."""


def check_hash(meta: dict, expected: str, what: str) -> None:
    got = meta.get("config_hash")
    if got != expected:
        raise StaleArtifact(f"{what}: artifact hash {got} does not match the "
                            f"current configuration {expected}; re-run synthesize")


# --- gain persistence -------------------------------------------------------

_BLOCKS = ("R11", "R12", "R21", "R22")


def save_gain(dirpath, gain, config_hash: str) -> None:
    """One matrix-CSV per block per time sample plus an index file."""
    os.makedirs(dirpath, exist_ok=True)
    nx = gain.n_x
    entries = []
    for k, t in enumerate(gain.t_tab):
        R = gain.R_tab[k]
        files = {}
        parts = {"R11": R[:nx, :nx], "R12": R[:nx, nx:],
                 "R21": R[nx:, :nx], "R22": R[nx:, nx:]}
        for name in _BLOCKS:
            fname = f"{name}_{k:05d}.csv"
            write_matrix(os.path.join(dirpath, fname), parts[name])
            files[name] = fname
        entries.append({"t": fmt(t), "files": files})
    write_json(os.path.join(dirpath, "index.json"), {
        "config_hash": config_hash,
        "lam": fmt(gain.lam),
        "n_x": gain.n_x,
        "n_k": gain.n_k,
        "solver_residual": fmt(gain.solver_residual),
        "entries": entries,
    })


def load_gain(dirpath, config_hash: str):
    from .riccati import RiccatiGain
    meta = read_json(os.path.join(dirpath, "index.json"))
    check_hash(meta, config_hash, "gain cache")
    n_x, n_k = meta["n_x"], meta["n_k"]
    n = n_x + n_k
    t_tab = np.array([float(e["t"]) for e in meta["entries"]])
    R_tab = np.empty((len(t_tab), n, n))
    for k, e in enumerate(meta["entries"]):
        R = np.empty((n, n))
        R[:n_x, :n_x] = read_matrix(os.path.join(dirpath, e["files"]["R11"]))
        R[:n_x, n_x:] = read_matrix(os.path.join(dirpath, e["files"]["R12"]))
        R[n_x:, :n_x] = read_matrix(os.path.join(dirpath, e["files"]["R21"]))
        R[n_x:, n_x:] = read_matrix(os.path.join(dirpath, e["files"]["R22"]))
        R_tab[k] = R
    return RiccatiGain(n_x=n_x, n_k=n_k, lam=float(meta["lam"]),
                       t_tab=t_tab, R_tab=R_tab,
                       solver_residual=float(meta["solver_residual"]))


# --- eigenbasis persistence -------------------------------------------------

def save_stokes(dirpath, B, config_hash: str) -> None:
    os.makedirs(dirpath, exist_ok=True)
    write_matrix(os.path.join(dirpath, "eig_fields.csv"), B.E)
    write_matrix(os.path.join(dirpath, "eig_values.csv"), B.alpha[None, :])
    write_matrix(os.path.join(dirpath, "eig_pressures.csv"), B.q)
    write_json(os.path.join(dirpath, "meta.json"), {
        "config_hash": config_hash, "N_gal": B.N_gal, "nu": fmt(B.nu),
    })


def load_stokes(dirpath, grid, config_hash: str):
    from .field_ops import StokesBasis, mass_vector
    meta = read_json(os.path.join(dirpath, "meta.json"))
    check_hash(meta, config_hash, "eigenbasis cache")
    E = read_matrix(os.path.join(dirpath, "eig_fields.csv"))
    alpha = read_matrix(os.path.join(dirpath, "eig_values.csv")).ravel()
    q = read_matrix(os.path.join(dirpath, "eig_pressures.csv"))
    return StokesBasis(grid=grid, nu=float(meta["nu"]), N_gal=meta["N_gal"],
                       E=E, alpha=alpha, q=q, mass=mass_vector(grid))


def save_basis_export(dirpath, basis, config_hash: str) -> None:
    """Control columns and projector matrices in the exchange format."""
    os.makedirs(dirpath, exist_ok=True)
    write_matrix(os.path.join(dirpath, "xi.csv"), basis.Xi)
    write_matrix(os.path.join(dirpath, "P_N.csv"), basis.P_N)
    write_matrix(os.path.join(dirpath, "P_Nperp.csv"), basis.P_Nperp)
    write_matrix(os.path.join(dirpath, "Q_f.csv"), basis.Q_f)
    write_matrix(os.path.join(dirpath, "Q_l.csv"), basis.Q_l)
    write_json(os.path.join(dirpath, "meta.json"), {
        "config_hash": config_hash, "M": basis.M,
        "mode_indices": [int(i) for i in basis.mode_indices],
        "dim_kernel": basis.dim_N, "n_perp": basis.n_perp,
    })


# --- run persistence --------------------------------------------------------

SERIES_COLUMNS = ("t", "norm_Piv", "norm_h1", "norm_kappa", "norm_rate", "cost")


def save_run(dirpath, run, config_hash: str, extra_meta=None) -> None:
    os.makedirs(dirpath, exist_ok=True)
    series = np.column_stack([run.t, run.norm_Piv, run.norm_h1,
                              run.norm_kappa, run.norm_rate, run.cost])
    with open(os.path.join(dirpath, "series.csv"), "w", encoding="utf-8") as fh:
        fh.write("# " + ",".join(SERIES_COLUMNS) + "\n")
        for row in series:
            fh.write(",".join(fmt(x) for x in row) + "\n")
    for k, (t, flat) in enumerate(run.snapshots):
        write_matrix(os.path.join(dirpath, f"snapshot_{k:04d}.csv"), flat[None, :])
    meta = {
        "config_hash": config_hash,
        "kind": run.kind,
        "status": run.status,
        "lam": fmt(run.lam),
        "n_steps": len(run.t) - 1,
        "snapshots": [fmt(t) for t, _ in run.snapshots],
    }
    meta.update(run.meta)
    if extra_meta:
        meta.update(extra_meta)
    meta = {k: (fmt(v) if isinstance(v, float) else v) for k, v in meta.items()}
    write_json(os.path.join(dirpath, "run.json"), meta)


def load_reference_table(path, grid):
    """Time-sampled reference: rows are t followed by face values row-major."""
    M = read_matrix(path)
    n_faces = grid.n_u + grid.n_v
    if M.shape[1] != 1 + n_faces:
        raise ValueError(f"{path}: expected {1 + n_faces} columns "
                         f"(t plus face values), got {M.shape[1]}")
    ts = M[:, 0]
    if np.any(np.diff(ts) <= 0):
        raise ValueError(f"{path}: sample times must increase")
    return ts, [M[k, 1:] for k in range(M.shape[0])]


def save_reference_table(path, ts, fields) -> None:
    rows = [np.concatenate([[t], f]) for t, f in zip(ts, fields)]
    write_matrix(path, np.array(rows))
