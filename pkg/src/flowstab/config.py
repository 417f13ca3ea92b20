"""Flat sectioned key=value configuration with line-precise validation.

The format is INI-like: ``[section]`` headers, ``key = value`` lines, ``#``
or ``;`` comments.  Unknown sections or keys are rejected, every value is
type-checked, and cross-field constraints report the offending line.  The
configuration hash (over the canonicalized key/value list) is embedded in
every artifact so stale caches are refused on load.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field


class ConfigError(Exception):
    """Invalid configuration; message carries file and line when known."""


def _positive(x):
    return x > 0


def _nonneg(x):
    return x >= 0


# schema: section -> key -> (type, default, validator or None, constraint text)
SCHEMA = {
    "domain": {
        "Lx": (float, 1.0, _positive, "must be positive"),
        "Ly": (float, 1.0, _positive, "must be positive"),
        "nx": (int, 48, lambda v: v >= 8, "must be at least 8"),
        "ny": (int, 48, lambda v: v >= 8, "must be at least 8"),
    },
    "patch": {
        "wall": (str, "bottom", lambda v: v in ("bottom", "right", "top", "left"),
                 "must be one of bottom/right/top/left"),
        "a_c": (float, 0.30, None, ""),
        "b_c": (float, 0.60, None, ""),
        "a_O": (float, 0.20, _nonneg, "must be nonnegative"),
        "b_O": (float, 0.70, _positive, "must be positive"),
        "eps_chi": (float, 1e-6, _positive, "must be positive"),
    },
    "physics": {
        "nu": (float, 0.05, _positive, "must be positive"),
        "lam": (float, 1.0, _positive, "must be positive"),
    },
    "bases": {
        "M": (int, 4, lambda v: v >= 1, "must be at least 1"),
        "N_gal": (int, 24, lambda v: v >= 1, "must be at least 1"),
        "M_t": (int, 4, lambda v: v >= 1, "must be at least 1"),
        "svd_tol": (float, 1e-10, _positive, "must be positive"),
    },
    "reference": {
        "kind": (str, "zero", lambda v: v in ("zero", "periodic", "csv"),
                 "must be zero, periodic or csv"),
        "a0": (float, 0.5, None, ""),
        "omega": (float, 1.0, None, ""),
        "path": (str, "", None, ""),
        "dt_table": (float, 0.05, _positive, "must be positive"),
    },
    "synthesis": {
        "T": (float, 0.0, _nonneg, "must be nonnegative (0 = auto 12/lam)"),
        "dt_R": (float, 0.0, _nonneg, "must be nonnegative (0 = auto T/1000)"),
        "tol_res": (float, 1e-6, _positive, "must be positive"),
    },
    "simulation": {
        "dt": (float, 2.5e-3, _positive, "must be positive"),
        "dt_reduced": (float, 1e-3, _positive, "must be positive"),
        "T_sim": (float, 10.0, _positive, "must be positive"),
        "snapshot_stride": (int, 20, _nonneg, "must be nonnegative"),
        "ic": (str, "eigmix", lambda v: v in ("eigmix", "zero"),
               "must be eigmix or zero"),
        "ic_amplitude": (float, 1e-3, _nonneg, "must be nonnegative"),
        "ic_kappa_amplitude": (float, 1e-3, _nonneg, "must be nonnegative"),
        "seed": (int, 7, _nonneg, "must be nonnegative"),
    },
    "openloop": {
        "K": (int, 6, _positive, "must be positive"),
        "N": (int, 0, _nonneg, "must be nonnegative (0 = sweep)"),
        "delta": (float, 0.1, lambda v: 0 < v < 0.25, "must lie in (0, 1/4)"),
    },
    "picard": {
        "T": (float, 3.0, _positive, "must be positive"),
        "tol": (float, 1e-8, _positive, "must be positive"),
        "max_iter": (int, 40, _positive, "must be positive"),
    },
}


@dataclass
class RunConfig:
    """Validated configuration values plus provenance."""

    values: dict
    path: str = "<defaults>"
    lines: dict = field(default_factory=dict)

    def __getitem__(self, key):
        section, name = key.split(".")
        return self.values[section][name]

    def line_of(self, section, name):
        return self.lines.get((section, name))

    @property
    def hash(self) -> str:
        canon = "\n".join(f"{s}.{k}={self.values[s][k]!r}"
                          for s in sorted(self.values)
                          for k in sorted(self.values[s]))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    @property
    def synthesis_T(self) -> float:
        T = self["synthesis.T"]
        return T if T > 0 else 12.0 / self["physics.lam"]

    @property
    def synthesis_dt_R(self) -> float:
        dt = self["synthesis.dt_R"]
        return dt if dt > 0 else 1e-3 * self.synthesis_T


def default_config() -> RunConfig:
    values = {s: {k: entry[1] for k, entry in keys.items()}
              for s, keys in SCHEMA.items()}
    return RunConfig(values=values)


def _convert(raw, typ, where):
    try:
        if typ is int:
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {typ.__name__}")


def parse_config(text: str, path: str = "<string>") -> RunConfig:
    cfg = default_config()
    cfg.path = path
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].split(";", 1)[0].strip()
        if not stripped:
            continue
        where = f"{path}:{lineno}"
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError(f"{where}: malformed section header {line.strip()!r}")
            section = stripped[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"{where}: unknown section [{section}]")
            continue
        if "=" not in stripped:
            raise ConfigError(f"{where}: expected key = value")
        if section is None:
            raise ConfigError(f"{where}: key outside any section")
        key, raw = (p.strip() for p in stripped.split("=", 1))
        if key not in SCHEMA[section]:
            raise ConfigError(f"{where}: unknown key {key!r} in section [{section}]")
        typ, _, validator, constraint = SCHEMA[section][key]
        val = _convert(raw, typ, where)
        if validator is not None and not validator(val):
            raise ConfigError(f"{where}: {section}.{key} {constraint} (got {val!r})")
        cfg.values[section][key] = val
        cfg.lines[(section, key)] = lineno
    _cross_validate(cfg)
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, path)


def _loc(cfg, section, key):
    ln = cfg.line_of(section, key)
    return f"{cfg.path}:{ln}" if ln else f"{cfg.path}:[{section}] {key}"


def _cross_validate(cfg: RunConfig) -> None:
    p = cfg.values["patch"]
    if not (p["a_O"] < p["a_c"] < p["b_c"] < p["b_O"]):
        raise ConfigError(f"{_loc(cfg, 'patch', 'a_c')}: patch intervals out of "
                          "order, need a_O < a_c < b_c < b_O")
    wall_len = cfg["domain.Lx"] if p["wall"] in ("bottom", "top") else cfg["domain.Ly"]
    if p["b_O"] > wall_len:
        raise ConfigError(f"{_loc(cfg, 'patch', 'b_O')}: mode window leaves the wall")
    if cfg["reference.kind"] == "csv" and not cfg["reference.path"]:
        raise ConfigError(f"{_loc(cfg, 'reference', 'kind')}: csv reference "
                          "needs reference.path")
    n_bnd = 2 * (cfg["domain.nx"] + cfg["domain.ny"])
    if 2 * cfg["bases.M"] > n_bnd:
        raise ConfigError(f"{_loc(cfg, 'bases', 'M')}: more control columns "
                          "than boundary samples")


def config_text(cfg: RunConfig) -> str:
    out = []
    for s in SCHEMA:
        out.append(f"[{s}]")
        for k in SCHEMA[s]:
            out.append(f"{k} = {cfg.values[s][k]}")
        out.append("")
    return "\n".join(out)
