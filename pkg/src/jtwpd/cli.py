"""Command-line harness: runs Keldysh integrations, MPS trajectories and
ensembles, detection analysis, design sweeps, and oracle comparisons.

Exit codes: 0 success, 2 configuration/usage error, 3 numeric failure.
Outputs are delimited text plus a key-value provenance manifest per run.
The default output root is taken from the ``JTWPD_OUTPUT_ROOT`` environment
variable (falling back to the current directory).
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import keldysh, model
from .config import config_hash, load_config
from .conveyor import (
    _write_manifest,
    code_version,
    load_ensemble,
    run_ensemble,
    run_trajectory,
    save_ensemble,
    save_trajectory,
)
from .detection import (
    assignment_report,
    build_filter,
    optimize_threshold,
    roc_curve,
    save_roc,
    score_records,
)
from .errors import ConfigError, IntegrationError, TruncationError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3

OUTPUT_ROOT_ENV = "JTWPD_OUTPUT_ROOT"


def _resolve_out(out: str | None, default_name: str) -> str:
    root = os.environ.get(OUTPUT_ROOT_ENV, ".")
    path = out if out is not None else os.path.join(root, default_name)
    os.makedirs(path, exist_ok=True)
    return path


def _manifest(path, mode: str, cfg=None, spec=None, **extra) -> None:
    entries = {
        "mode": mode,
        "version": code_version(),
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    if cfg is not None:
        entries["config_hash"] = config_hash(cfg, spec)
    entries.update(extra)
    _write_manifest(path, entries)


def _load_run_config(path):
    cfg, spec, hw = load_config(path)
    if spec is None:
        spec = cfg.wavepacket()
    return cfg, spec, hw


def _parse_times(raw: str | None) -> tuple[float, ...]:
    if not raw:
        return ()
    return tuple(float(x) for x in raw.split(","))


# -- subcommands ---------------------------------------------------------------


def _cmd_keldysh(args) -> int:
    cfg, spec, _ = _load_run_config(args.config)
    out = _resolve_out(args.out, "keldysh")
    t_grid = np.arange(cfg.n_steps + 1) * cfg.dt
    series = keldysh.integrate(cfg, spec, t_grid, n_a=args.probe_dim, dt=args.dt)
    series.save(os.path.join(out, "moments.tsv"))
    _manifest(
        os.path.join(out, "manifest.txt"),
        "keldysh",
        cfg,
        spec,
        integrator_dt=args.dt,
        probe_dim=args.probe_dim,
    )
    print(f"keldysh moments written to {out}")
    return EXIT_OK


def _cmd_trajectory(args) -> int:
    cfg, spec, _ = _load_run_config(args.config)
    out = _resolve_out(args.out, f"trajectory_{args.seed}")
    record = run_trajectory(
        cfg,
        spec,
        seed=args.seed,
        photon=not args.vacuum,
        snapshot_times=_parse_times(args.snapshot_times),
        max_bond=args.max_bond,
        svd_tol=args.svd_tol,
    )
    save_trajectory(record, os.path.join(out, "trajectory.tsv"))
    _manifest(
        os.path.join(out, "manifest.txt"),
        "mps-stochastic" if cfg.kappa_a_tau > 0 else "mps-deterministic",
        cfg,
        spec,
        seed=args.seed,
        photon=int(not args.vacuum),
        max_bond=args.max_bond,
        svd_tol=args.svd_tol,
        failed=int(record.failed),
    )
    if record.failed:
        print(f"trajectory failed: {record.error}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"trajectory written to {out}")
    return EXIT_OK


def _cmd_ensemble(args) -> int:
    if args.n_traj < 1:
        raise ConfigError("ensemble requires n-traj >= 1")
    cfg, spec, _ = _load_run_config(args.config)
    out = _resolve_out(args.out, f"ensemble_{args.base_seed}")
    result = run_ensemble(
        cfg,
        spec,
        n_traj=args.n_traj,
        base_seed=args.base_seed,
        photon=not args.vacuum,
        n_workers=args.workers,
        max_bond=args.max_bond,
        svd_tol=args.svd_tol,
    )
    save_ensemble(result, out, include_records=not args.no_records)
    _manifest(
        os.path.join(out, "run_manifest.txt"),
        "mps-stochastic",
        cfg,
        spec,
        base_seed=args.base_seed,
        n_traj=args.n_traj,
        n_failed=result.n_failed,
        photon=int(not args.vacuum),
        workers=args.workers,
        max_bond=args.max_bond,
        svd_tol=args.svd_tol,
    )
    print(f"ensemble ({result.n_traj} trajectories, {result.n_failed} failed) in {out}")
    return EXIT_RUNTIME if result.n_failed == result.n_traj else EXIT_OK


def _cmd_analyze(args) -> int:
    out = _resolve_out(args.out, "analysis")
    photon = load_ensemble(args.photon_dir)
    vacuum = load_ensemble(args.vacuum_dir)
    tau_m = args.tau_m if args.tau_m is not None else float(photon.t[-1])
    filt = build_filter(photon, tau_m)
    s1 = score_records(photon.records, filt, maximize=args.maximize)
    s0 = score_records(vacuum.records, filt, maximize=args.maximize)
    threshold = optimize_threshold(s1, s0)
    report = assignment_report(s1, s0, threshold, tau_m)
    report.save(os.path.join(out, "report.txt"))
    save_roc(os.path.join(out, "roc.tsv"), *roc_curve(s1, s0))
    np.savetxt(
        os.path.join(out, "filter.tsv"),
        np.column_stack([filt.t, filt.f]),
        header="t\tf",
        delimiter="\t",
    )
    np.savetxt(
        os.path.join(out, "scores_photon.tsv"), s1, header="score", delimiter="\t"
    )
    np.savetxt(
        os.path.join(out, "scores_vacuum.tsv"), s0, header="score", delimiter="\t"
    )
    _manifest(
        os.path.join(out, "manifest.txt"),
        "analyze",
        photon_dir=args.photon_dir,
        vacuum_dir=args.vacuum_dir,
        photon_hash=photon.config_hash,
        vacuum_hash=vacuum.config_hash,
        tau_m=tau_m,
        maximize=int(args.maximize),
    )
    print(
        f"fidelity = {report.fidelity:.4f} +/- {report.stderr:.4f} "
        f"(eta = {report.eta:.4f}, p_dark = {report.p_dark:.4f}, "
        f"threshold = {report.threshold:.4f})"
    )
    return EXIT_OK


def _cmd_design(args) -> int:
    _, _, hw = _load_run_config(args.config)
    if hw is None:
        raise ConfigError("design mode requires a [hardware] section in the config")
    out = _resolve_out(args.out, "design")
    g_taus = [float(x) for x in args.g_tau.split(",")]
    k_qs = [float(x) for x in args.k_q.split(",")] if args.k_q else [hw.k_q]
    rows = []
    for k_q in k_qs:
        hw_k = replace(hw, k_q=k_q)
        for g_tau in g_taus:
            rows.append((g_tau, k_q, model.n_cells_required(g_tau, hw_k)))
    np.savetxt(
        os.path.join(out, "design.tsv"),
        np.array(rows),
        header="g_tau\tk_q\tn_cells",
        delimiter="\t",
        fmt=["%.6g", "%.6g", "%d"],
    )
    alpha, residual = model.steady_state_alpha(
        hw.total_kerr, args.kappa_a, args.epsilon, return_residual=True
    )
    _manifest(
        os.path.join(out, "manifest.txt"),
        "design-sweep",
        e_j_hz=hw.e_j,
        coupler_energy_hz=model.coupler_energy(hw.e_j, hw.n_s),
        chi_per_cell=model.chi_per_cell(hw),
        steady_state_alpha=abs(alpha),
        steady_state_residual=residual,
    )
    print(f"design sweep ({len(rows)} rows) written to {out}")
    return EXIT_OK


def _series_pair(path):
    """Load (t, y_mean, y_var) from a keldysh moments file or trajectory file."""
    if os.path.isdir(path):
        ens = load_ensemble(path, load_records=False)
        return ens.t, ens.mean_y, ens.var_y
    data = np.atleast_2d(np.loadtxt(path))
    return data[:, 0], data[:, 1], data[:, 2]


def _cmd_compare(args) -> int:
    t_m, y_m, v_m = _series_pair(args.mps)
    t_k, y_k, v_k = _series_pair(args.keldysh)
    if len(t_m) != len(t_k) or np.abs(t_m - t_k).max() > 1e-9:
        if not args.interpolate:
            raise ConfigError(
                "time grids differ; rerun with --interpolate to resample"
            )
        y_k = np.interp(t_m, t_k, y_k)
        v_k = np.interp(t_m, t_k, v_k)
        t_k = t_m
    scale_y = max(np.abs(y_k).max(), 1e-30)
    scale_v = max(np.abs(v_k).max(), 1e-30)
    dev_y = float(np.abs(y_m - y_k).max() / scale_y)
    dev_v = float(np.abs(v_m - v_k).max() / scale_v)
    passed = dev_y <= args.tol and dev_v <= args.tol
    if args.out is not None:
        out = _resolve_out(args.out, "compare")
        np.savetxt(
            os.path.join(out, "discrepancy.tsv"),
            np.column_stack([t_m, y_m - y_k, v_m - v_k]),
            header="t\tdelta_y_mean\tdelta_y_var",
            delimiter="\t",
        )
        _manifest(
            os.path.join(out, "manifest.txt"),
            "compare",
            mps=args.mps,
            keldysh=args.keldysh,
            sup_rel_dev_y=dev_y,
            sup_rel_dev_var=dev_v,
            tol=args.tol,
            passed=int(passed),
        )
    status = "PASS" if passed else "FAIL"
    print(
        f"{status}: sup-norm relative deviation y_mean = {dev_y:.4e}, "
        f"y_var = {dev_v:.4e} (tol {args.tol:g})"
    )
    return EXIT_OK if passed else EXIT_RUNTIME


# -- argument parsing -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jtwpd",
        description="Traveling-wave photodetector simulation harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("keldysh", help="integrate the perturbative master equation")
    add_common(p)
    p.add_argument("--dt", type=float, default=1e-3, help="integrator step")
    p.add_argument("--probe-dim", type=int, default=30, help="probe Fock cutoff")
    p.set_defaults(func=_cmd_keldysh)

    p = sub.add_parser("trajectory", help="run a single MPS trajectory")
    add_common(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--vacuum", action="store_true", help="no input photon")
    p.add_argument(
        "--snapshot-times", default=None, help="comma-separated snapshot times"
    )
    p.add_argument("--max-bond", type=int, default=64)
    p.add_argument("--svd-tol", type=float, default=1e-8)
    p.set_defaults(func=_cmd_trajectory)

    p = sub.add_parser("ensemble", help="run an ensemble of MPS trajectories")
    add_common(p)
    p.add_argument("--n-traj", type=int, required=True)
    p.add_argument("--base-seed", type=int, required=True)
    p.add_argument("--vacuum", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-bond", type=int, default=64)
    p.add_argument("--svd-tol", type=float, default=1e-8)
    p.add_argument(
        "--no-records", action="store_true", help="store only the ensemble averages"
    )
    p.set_defaults(func=_cmd_ensemble)

    p = sub.add_parser("analyze", help="detection statistics from two ensembles")
    p.add_argument("--photon-dir", required=True)
    p.add_argument("--vacuum-dir", required=True)
    p.add_argument("--tau-m", type=float, default=None, help="measurement window")
    p.add_argument(
        "--maximize",
        action="store_true",
        help="score with max over window placements instead of t_eval = 0",
    )
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("design", help="hardware design-formula sweep")
    add_common(p)
    p.add_argument("--g-tau", default="1,2,3", help="comma-separated g*tau values")
    p.add_argument("--k-q", default=None, help="comma-separated K_Q values")
    p.add_argument("--kappa-a", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=1.0)
    p.set_defaults(func=_cmd_design)

    p = sub.add_parser("compare", help="MPS-vs-Keldysh discrepancy report")
    p.add_argument("--mps", required=True, help="ensemble dir or trajectory file")
    p.add_argument("--keldysh", required=True, help="moments file")
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--interpolate", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationError, TruncationError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
