"""Command line harness: synthesize, simulate, verify, report.

Heavy numerical modules are imported lazily inside the command handlers so
that ``--deterministic`` can pin the linear-algebra thread pools to the
single-threaded reference path before they load.

Exit codes: 0 success (including scientifically expected divergence of the
nonlinear loop), 1 configuration error, 2 numerical failure, 3 verification
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

OUT_ENV = "FLOWSTAB_OUT"


def _parser():
    p = argparse.ArgumentParser(
        prog="flowstab",
        description="boundary feedback stabilization workbench")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="path to the INI config")
        sp.add_argument("--out", default=None,
                        help=f"artifact directory (default ./flowstab_out, "
                             f"env {OUT_ENV} overrides)")
        sp.add_argument("--deterministic", action="store_true",
                        help="force the single-threaded reference path")

    sp = sub.add_parser("synthesize", help="build bases and the feedback gain")
    common(sp)
    sp = sub.add_parser("simulate", help="run a closed- or open-loop simulation")
    common(sp)
    sp.add_argument("--mode", required=True,
                    choices=("reduced", "linear", "nonlinear", "openloop", "picard"))
    sp = sub.add_parser("verify", help="run invariant suites")
    common(sp)
    sp.add_argument("--suite", required=True,
                    choices=("basis", "operators", "riccati", "closedloop",
                             "appendix", "all"))
    sp = sub.add_parser("report", help="consolidate artifacts into a report")
    common(sp)
    return p


def _out_dir(args) -> str:
    if args.out:
        return args.out
    return os.environ.get(OUT_ENV, "./flowstab_out")


def _pin_threads():
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
        os.environ.setdefault(var, "1")


def cmd_synthesize(args) -> int:
    import numpy as np
    from .config import load_config
    from . import pipeline
    cfg = load_config(args.config)
    out = _out_dir(args)
    setup = pipeline.synthesize(cfg, out_dir=out)
    print(f"synthesized: N_gal={setup.model.N_gal} M={setup.basis.M} "
          f"n_perp={setup.model.n_perp} dim_kernel={setup.basis.dim_N}")
    print(f"  horizon={cfg.synthesis_T:g} dt_R={cfg.synthesis_dt_R:g} "
          f"samples={len(setup.gain.t_tab)}")
    print(f"  |R(0)|={float(np.linalg.norm(setup.gain.R_tab[0])):.6g} "
          f"feedback_norm_bound={setup.gain.feedback_norm_bound():.6g}")
    print(f"  artifacts in {out} (config hash {cfg.hash})")
    return 0


def cmd_simulate(args) -> int:
    import numpy as np
    from .config import load_config
    from . import pipeline, io_csv
    from .simulators import (simulate_reduced_closedloop, simulate_full_linear,
                             simulate_full_nonlinear, picard_iterate, z_norm_diff)
    cfg = load_config(args.config)
    out = _out_dir(args)
    mode = args.mode

    if mode == "openloop":
        from .openloop import concatenate, TimeShaping
        setup = pipeline.build_setup(cfg)
        _, kc0, v0 = pipeline.initial_condition(cfg, setup.model)
        kappa_tau0 = setup.basis.Q_l @ setup.basis.kappa_full(kc0)
        sh = TimeShaping(delta=cfg["openloop.delta"], M_t=cfg["bases.M_t"])
        N = cfg["openloop.N"] or None
        run = concatenate(v0, kappa_tau0, setup.model, K=cfg["openloop.K"],
                          lam_target=cfg["physics.lam"], N=N, shaping=sh,
                          dt=cfg["simulation.dt_reduced"])
        rundir = os.path.join(out, "run_openloop")
        os.makedirs(rundir, exist_ok=True)
        with open(os.path.join(rundir, "intervals.csv"), "w", encoding="utf-8") as fh:
            fh.write("# n,rho,coeff_frobenius,rank\n")
            for n, (r, c, k) in enumerate(zip(run.rho, run.coeff_norms, run.rank),
                                          start=1):
                fh.write(f"{n},{io_csv.fmt(r)},{io_csv.fmt(c)},{k}\n")
        io_csv.write_json(os.path.join(rundir, "run.json"), {
            "config_hash": cfg.hash, "mode": "openloop",
            "N_used": run.N_used, "max_rho": io_csv.fmt(float(np.max(run.rho))),
            "fitted_rate": io_csv.fmt(run.fitted_rate),
            "weighted_control_energy": io_csv.fmt(run.weighted_control_energy),
            "diagnostics": [[n, io_csv.fmt(r)] for n, r in run.diagnostics],
        })
        print(f"openloop: N={run.N_used} max_rho={np.max(run.rho):.4f} "
              f"fitted_rate={run.fitted_rate:.3f}")
        print(f"  per-interval table in {rundir}/intervals.csv")
        return 0

    setup = pipeline.load_synthesis(cfg, out)
    x0, kc0, v0 = pipeline.initial_condition(cfg, setup.model)
    T = cfg["simulation.T_sim"]
    stride = cfg["simulation.snapshot_stride"]
    if mode == "reduced":
        run = simulate_reduced_closedloop(setup.model, setup.gain, x0, kc0, T=T,
                                          dt=cfg["simulation.dt_reduced"],
                                          snapshot_stride=stride)
    elif mode == "linear":
        run = simulate_full_linear(setup.model, setup.gain, v0, kc0, T=T,
                                   dt=cfg["simulation.dt"], snapshot_stride=stride)
    elif mode == "nonlinear":
        run = simulate_full_nonlinear(setup.model, setup.gain, v0, kc0, T=T,
                                      dt=cfg["simulation.dt"],
                                      snapshot_stride=stride)
    elif mode == "picard":
        Tp = cfg["picard.T"]
        fp, diffs = picard_iterate(setup.model, setup.gain, v0, kc0, T=Tp,
                                   dt=cfg["simulation.dt"],
                                   tol=cfg["picard.tol"],
                                   max_iter=cfg["picard.max_iter"])
        direct = simulate_full_nonlinear(setup.model, setup.gain, v0, kc0, T=Tp,
                                         dt=cfg["simulation.dt"],
                                         snapshot_stride=0, store_history=True)
        match = z_norm_diff(fp, direct, setup.model)
        run = fp
        run.history = None  # not persisted
        run.meta.update({
            "picard_iterations": len(diffs),
            "picard_final_difference": io_csv.fmt(diffs[-1]),
            "picard_vs_nonlinear": io_csv.fmt(match),
        })
    rate = run.fitted_decay_rate("ext" if mode == "reduced" else "piv",
                                 (1.0, min(T, 10.0)))
    rundir = os.path.join(out, f"run_{mode}")
    io_csv.save_run(rundir, run, cfg.hash,
                    extra_meta={"fitted_decay_rate": rate, "mode": mode})
    print(f"{mode}: status={run.status} fitted_decay_rate={rate:.4f} "
          f"(target {0.5 * cfg['physics.lam']:.3f})")
    print(f"  series in {rundir}/series.csv")
    return 0


def cmd_verify(args) -> int:
    from .config import load_config
    from . import io_csv
    from .verify import run_suite
    cfg = load_config(args.config)
    out = _out_dir(args)
    checks = run_suite(cfg, args.suite)
    os.makedirs(out, exist_ok=True)
    report = {
        "config_hash": cfg.hash,
        "suite": args.suite,
        "checks": [c.to_dict() for c in checks],
        "passed": all(c.passed for c in checks),
    }
    path = os.path.join(out, f"verify_{args.suite}.json")
    io_csv.write_json(path, report)
    for c in checks:
        mark = "PASS" if c.passed else "FAIL"
        print(f"[{mark}] {c.name}: value={c.value:.6g} threshold={c.threshold:.6g}")
    print(f"report: {path}")
    return 0 if report["passed"] else 3


def cmd_report(args) -> int:
    import numpy as np
    from .config import load_config
    from . import pipeline, io_csv
    from .riccati import build_extended, solve_dre
    from .simulators import simulate_reduced_closedloop
    from .control_basis import build_xi
    from .flow_models import assemble_reduced
    cfg = load_config(args.config)
    out = _out_dir(args)
    report = {"config_hash": cfg.hash, "runs": {}}
    syn = os.path.join(out, "synthesis.json")
    if os.path.exists(syn):
        report["synthesis"] = io_csv.read_json(syn)
    for mode in ("reduced", "linear", "nonlinear", "openloop", "picard"):
        path = os.path.join(out, f"run_{mode}", "run.json")
        if os.path.exists(path):
            report["runs"][mode] = io_csv.read_json(path)
    # smallest mode count reaching the target decay (reduced-only sweep)
    setup = pipeline.build_setup(cfg)
    lam = cfg["physics.lam"]
    rng_sweep = []
    smallest = None
    for m in range(1, cfg["bases.M"] + 1):
        basis_m = build_xi(m, setup.patch, setup.grid, svd_tol=cfg["bases.svd_tol"])
        model_m = assemble_reduced(setup.ref, setup.stokes, basis_m,
                                   pipeline.sample_grid(cfg, setup.ref),
                                   cfg["physics.nu"])
        gain_m = solve_dre(build_extended(model_m, lam), cfg.synthesis_T,
                           dt_R=cfg.synthesis_dt_R)
        rng = np.random.default_rng(cfg["simulation.seed"])
        x0 = rng.standard_normal(model_m.N_gal)
        kc0 = rng.standard_normal(model_m.n_perp)
        run = simulate_reduced_closedloop(model_m, gain_m, x0, kc0,
                                          T=cfg["simulation.T_sim"],
                                          dt=cfg["simulation.dt_reduced"])
        rate = run.fitted_decay_rate("ext", (1.0, cfg["simulation.T_sim"]))
        rng_sweep.append({"M": m, "fitted_rate": io_csv.fmt(rate)})
        if smallest is None and rate >= 0.45 * lam:
            smallest = m
    report["mode_count_sweep"] = rng_sweep
    report["smallest_M_reaching_target_decay"] = smallest
    path = os.path.join(out, "report.json")
    os.makedirs(out, exist_ok=True)
    io_csv.write_json(path, report)
    print(json.dumps(report, indent=2, sort_keys=True))
    print(f"report: {path}")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.deterministic:
        _pin_threads()
    from .config import ConfigError
    from .io_csv import StaleArtifact
    handler = {
        "synthesize": cmd_synthesize,
        "simulate": cmd_simulate,
        "verify": cmd_verify,
        "report": cmd_report,
    }[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StaleArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
