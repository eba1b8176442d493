"""Command-line entry point: ``camp {taps,run,sweep,diagnose}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path


from camp.bench.config import PAPER_TRIALS, ConfigError, SweepConfig, format_config, load_config, parse_config
from camp.bench.sweep import draw_problem, prepare_taps, run_sweep, threshold_search, write_text
from camp.denoise import Denoiser
from camp.diagnostics import decompose_errors, gaussianity_report, to_db, verify_m_recursion
from camp.solvers import ALGORITHMS, SolverConfig, run
from camp.spectral import (
    TapRecursionError,
    asymptotic_moments_geometric,
    profile_from_moments,
    tap_recursion,
    taps_geometric_closed_form,
)

EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IDENTITY = 4
IDENTITY_TOLERANCE = 1e-8


def _config(args) -> SweepConfig:
    cfg = load_config(args.config) if args.config else SweepConfig()
    if args.set:
        base = format_config(cfg)
        cfg = parse_config(_merge(base, args.set))
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.full_scale:
        changes["trials"] = PAPER_TRIALS
    if args.output is not None:
        changes["output_path"] = args.output
    return cfg.replace(**changes) if changes else cfg


def _merge(base: str, overrides) -> str:
    # later --set options win over earlier ones and over the file
    latest = {}
    for o in overrides:
        if "=" not in o:
            raise ConfigError(f"--set expects KEY=VALUE, got {o!r}")
        latest[o.split("=", 1)[0].strip()] = o
    kept = [ln for ln in base.splitlines() if ln.split("=", 1)[0].strip() not in latest]
    return "\n".join(kept + list(latest.values())) + "\n"


def cmd_taps(args) -> int:
    if args.moments:
        text = Path(args.moments).read_text(encoding="utf-8").replace(",", " ")
        profile = profile_from_moments([float(v) for v in text.split()])
        T = min(args.T, profile.k_max - 2)
        table = tap_recursion(profile, T)
        print(table.to_text() if args.table else _tap_lines(table.taps), end="")
        return 0
    if args.delta is None or args.kappa is None:
        raise ConfigError("taps needs --delta and --kappa, or --moments")
    if args.method == "closed" or (args.method == "both" and args.kappa == 1.0):
        taps = prepare_taps(args.delta, args.kappa, args.T)
        print(_tap_lines(taps), end="")
        return 0
    table = tap_recursion(asymptotic_moments_geometric(args.delta, args.kappa), args.T)
    if args.table:
        print(table.to_text(), end="")
    elif args.method == "both":
        closed = taps_geometric_closed_form(args.delta, args.kappa, args.T)
        print("t,closed_form,recursion")
        for t, (c, r) in enumerate(zip(closed, table.taps)):
            print(f"{t},{float(c)!r},{float(r)!r}")
    else:
        print(_tap_lines(table.taps), end="")
    return 0


def _tap_lines(taps) -> str:
    return "t,tap\n" + "".join(f"{t},{float(v)!r}\n" for t, v in enumerate(taps))


def _theta(args, cfg, alg, kappa, taps):
    if args.theta is not None:
        return args.theta
    return threshold_search(cfg, alg, kappa, taps, args.workers).theta


def cmd_run(args) -> int:
    cfg = _config(args)
    kappa = float(args.kappa)
    taps = prepare_taps(cfg.delta, kappa, cfg.T)
    ens, x, meas = draw_problem(cfg, kappa, args.trial)
    algorithms = [args.algorithm] if args.algorithm else list(cfg.algorithms)
    curves = {}
    for alg in algorithms:
        theta = _theta(args, cfg, alg, kappa, taps)
        traj = run(ens, meas, SolverConfig(cfg.T, Denoiser(theta), alg, taps), x)
        curves[alg] = traj.mse
        print(f"# {alg} kappa={kappa:g} theta={theta:g} final_mse_db={float(to_db(traj.final_mse)):.3f}"
              f" failed_at={int(traj.failed_at)}")
        table = traj.to_table()
        print(table, end="")
        if cfg.output_path:
            out = Path(cfg.output_path)
            out.mkdir(parents=True, exist_ok=True)
            write_text(out / f"trajectory_{alg}.csv", table)
    if cfg.output_path:
        from camp.bench.plotting import plot_trajectory

        plot_trajectory(curves, Path(cfg.output_path) / "mse_vs_iteration.png", title=f"kappa = {kappa:g}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if not cfg.output_path:
        cfg = cfg.replace(output_path="sweep_out")
    result = run_sweep(cfg, workers=args.workers)
    print("algorithm,kappa,theta,mean_mse_db,stderr_db,diverged")
    for r in result.reports:
        print(f"{r.algorithm},{r.kappa:g},{r.theta:.4g},{r.mean_mse_db:.3f},{r.stderr_db:.3f},{r.diverged}")
    print(f"# outputs in {cfg.output_path}")
    limit = cfg.max_diverged_fraction
    if limit is not None and result.diverged_fraction > limit:
        print(f"# diverged fraction {result.diverged_fraction:.3f} exceeds {limit}", file=sys.stderr)
        return EXIT_DIVERGED
    return 0


def cmd_diagnose(args) -> int:
    cfg = _config(args)
    kappa = float(args.kappa)
    taps = prepare_taps(cfg.delta, kappa, cfg.T)
    theta = _theta(args, cfg, "camp", kappa, taps)
    ens, x, meas = draw_problem(cfg, kappa, args.trial)
    traj = run(ens, meas, SolverConfig(cfg.T, Denoiser(theta), "camp", taps), x)
    dec = decompose_errors(traj, x, ens)
    residual = verify_m_recursion(dec, ens, taps, meas.noise)
    lines = [
        f"# camp diagnostics M={cfg.M} N={cfg.N} kappa={kappa:g} theta={theta:g} trial={args.trial}",
        f"m_recursion_residual = {residual!r}",
        f"m_recursion_ok = {residual <= IDENTITY_TOLERANCE}",
        "t,mse_db,a,skewness,excess_kurtosis,ks_distance,variance",
    ]
    for t in range(traj.T):
        g = gaussianity_report(dec.h[t])
        lines.append(f"{t},{float(to_db(traj.mse[t])):.4f},{float(traj.a[t]):.6f},{g.skewness:.5f},"
                     f"{g.excess_kurtosis:.5f},{g.ks_distance:.5f},{g.variance:.6g}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if cfg.output_path:
        out = Path(cfg.output_path)
        out.mkdir(parents=True, exist_ok=True)
        write_text(out / "diagnostics.txt", text)
    return 0 if residual <= IDENTITY_TOLERANCE else EXIT_IDENTITY


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--trials", type=int)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--full-scale", action="store_true", help=f"use {PAPER_TRIALS} trials")
    common.add_argument("--output", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="camp", description="CAMP / AMP / OAMP-VAMP recovery benchmark")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("taps", parents=[common], help="print the tap sequence")
    t.add_argument("--delta", type=float)
    t.add_argument("--kappa", type=float)
    t.add_argument("--moments", help="file of moments mu_0, mu_1, ... (whitespace or comma separated)")
    t.add_argument("--T", type=int, default=20)
    t.add_argument("--method", choices=("closed", "recursion", "both"), default="closed")
    t.add_argument("--table", action="store_true", help="print the full g[t,k] table (recursion)")
    t.set_defaults(func=cmd_taps)

    r = sub.add_parser("run", parents=[common], help="one trial with per-iteration output")
    r.add_argument("--kappa", type=float, default=10.0)
    r.add_argument("--theta", type=float, help="threshold (default: pilot search)")
    r.add_argument("--algorithm", choices=ALGORITHMS)
    r.add_argument("--trial", type=int, default=0)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common], help="MSE versus condition number")
    s.set_defaults(func=cmd_sweep)

    d = sub.add_parser("diagnose", parents=[common], help="error-model identity and Gaussianity")
    d.add_argument("--kappa", type=float, default=100.0)
    d.add_argument("--theta", type=float, help="threshold (default: pilot search)")
    d.add_argument("--trial", type=int, default=0)
    d.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TapRecursionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
