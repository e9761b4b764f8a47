"""Command-line entry point: ``gpcctl {trim,synthesize,simulate,mc,compare,defaults}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(Exception):
    pass


def _config(args, **overrides):
    import yaml

    from .sim import load_config

    try:
        return load_config(args.config, overrides)
    except (OSError, KeyError, ValueError, TypeError, yaml.YAMLError) as exc:
        raise ConfigError(str(exc)) from exc


def cmd_trim(args) -> int:
    from .aircraft import solve_trim

    cfg = _config(args)
    aT, deT = solve_trim(cfg.aircraft, args.gamma)
    print(f"alpha_T_deg {math.degrees(aT):.6f}")
    print(f"theta_T_deg {math.degrees(aT + args.gamma):.6f}")
    print(f"de_T_deg {math.degrees(deT):.6f}")
    print(f"rho {cfg.aircraft.rho}")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    from .sim import controller_for

    cfg = _config(args, order=args.order)
    law = controller_for(cfg.aircraft, tuple(cfg.Q_weights), float(cfg.R_weight), cfg.order)
    text = law.to_text()
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote order-{cfg.order} law with {sum(len(p) for p in law.field.components)} terms to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .sim import dump_config, emit_report, run_closed_loop

    cfg = _config(args, order=args.order, alpha0_deg=args.alpha0, seed=args.seed, T=args.horizon)
    traj = run_closed_loop(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emit_report(traj, out / "trajectory.csv", "csv")
    emit_report(traj, out / "summary.txt", "summary")
    (out / "config.yaml").write_text(dump_config(cfg))
    print((out / "summary.txt").read_text(), end="")
    return EXIT_NUMERIC if traj.metrics["aborted"] else EXIT_OK


def cmd_mc(args) -> int:
    from .sim import dump_config, emit_report, run_monte_carlo

    cfg = _config(args, order=args.order, alpha0_deg=args.alpha0, seed=args.seed, T=args.horizon)
    stats = run_monte_carlo(cfg, args.samples)
    print(f"samples {args.samples} recovery_rate {stats.recovery_rate:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        emit_report(stats, out / "ensemble.csv", "csv")
        emit_report(stats, out / "summary.txt", "summary")
        (out / "config.yaml").write_text(dump_config(cfg))
    return EXIT_OK


def cmd_compare(args) -> int:
    from .sim import SYSTEMS, compare_gpc_mc, write_csv

    if args.system not in SYSTEMS:
        raise ConfigError(f"unknown system {args.system!r}; choose from {sorted(SYSTEMS)}")
    times = tuple(float(v) for v in args.times.split(","))
    rep = compare_gpc_mc(args.system, args.degree, args.samples, times, args.seed)
    n = rep["gpc_mean"].shape[1]
    header = ["t", "state", "gpc_mean", "mc_mean", "se_mean", "gpc_std", "mc_std", "se_std"]
    rows = []
    for i, t in enumerate(rep["t"]):
        for j in range(n):
            rows.append([t, j] + [rep[k][i, j] for k in header[2:]])
    for r in rows:
        print(" ".join(f"{v:.6g}" for v in r))
    if args.out:
        write_csv(args.out, header, rows)
    return EXIT_OK


def cmd_defaults(args) -> int:
    from .sim import SimConfig, dump_config

    sys.stdout.write(dump_config(SimConfig()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gpcctl", description="gPC adaptive stall-recovery toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", type=str, default=None, help="YAML config file")
        return p

    p = with_config(sub.add_parser("trim", help="solve the trim condition"))
    p.add_argument("--gamma", type=float, default=0.0, help="climb angle (rad)")
    p.set_defaults(func=cmd_trim)

    p = with_config(sub.add_parser("synthesize", help="design a polynomial feedback law"))
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=cmd_synthesize)

    for name, func, helptext in (("simulate", cmd_simulate, "one closed-loop run"),
                                 ("mc", cmd_mc, "closed-loop Monte Carlo ensemble")):
        p = with_config(sub.add_parser(name, help=helptext))
        p.add_argument("--alpha0", type=float, default=None, help="initial angle of attack (deg)")
        p.add_argument("--order", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--horizon", type=float, default=None, help="simulated time (s)")
        if name == "simulate":
            p.add_argument("--out", type=str, required=True)
        else:
            p.add_argument("--samples", type=int, default=100)
            p.add_argument("--out", type=str, default=None)
        p.set_defaults(func=func)

    p = sub.add_parser("compare", help="gPC moments against Monte Carlo")
    p.add_argument("--system", type=str, default="linear_decay")
    p.add_argument("--degree", type=int, default=4)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--times", type=str, default="0.5,1,2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("defaults", help="print the default configuration")
    p.set_defaults(func=cmd_defaults)
    return ap


def main(argv=None) -> int:
    from .estimation import FilterError
    from .hjb import MatchingSystemError, RiccatiError

    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RiccatiError, MatchingSystemError, FilterError, np.linalg.LinAlgError, FloatingPointError,
            RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
