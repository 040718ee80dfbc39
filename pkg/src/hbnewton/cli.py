"""Command-line entry point: ``hbnewton {run,certify,rate,sweep}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import HBNewtonError
from .experiment import (
    build_problem,
    certificate_report,
    load_config,
    parse_grid,
    rate_report,
    resolve_output_dir,
    run_experiment,
    run_sweep,
)


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    summary = run_experiment(cfg)
    print(summary.format())
    print(f"f* = {summary.f_star:.17g}")
    print(f"outputs in {resolve_output_dir(cfg)}")
    return 1 if summary.any_diverged else 0


def _cmd_certify(args) -> int:
    prob = build_problem(load_config(args.config))
    text, _ = certificate_report(prob.constants, args.alpha, args.beta)
    print(text)
    return 0


def _cmd_rate(args) -> int:
    rho, r2, burn_in = rate_report(args.trace)
    print(f"rho_hat = {rho:.10g}")
    print(f"R^2 = {r2:.6f}")
    print(f"burn-in = {burn_in}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    grid = parse_grid(Path(args.grid).read_text())
    results = run_sweep(cfg, grid)
    for a, rounds in results:
        print(f"{a.variant:<14} alpha={a.alpha:<8g} beta={a.beta:<8g} rounds={rounds}")
    best = {}
    for a, rounds in results:
        if a.variant not in best or rounds < best[a.variant][1]:
            best[a.variant] = (a, rounds)
    for variant, (a, rounds) in best.items():
        print(f"best {variant}: alpha={a.alpha:g} beta={a.beta:g} rounds={rounds}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hbnewton", description=__doc__)
    sub = p.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="run every configured algorithm and write traces")
    r.add_argument("config")
    r.set_defaults(func=_cmd_run)
    c = sub.add_parser("certify", help="check (alpha, beta) against the sufficient conditions")
    c.add_argument("config")
    c.add_argument("--alpha", type=float, required=True)
    c.add_argument("--beta", type=float, default=0.0)
    c.set_defaults(func=_cmd_certify)
    t = sub.add_parser("rate", help="fit a linear rate to a trace CSV")
    t.add_argument("trace")
    t.set_defaults(func=_cmd_rate)
    s = sub.add_parser("sweep", help="rounds-to-target over a hyperparameter grid")
    s.add_argument("config")
    s.add_argument("--grid", required=True)
    s.set_defaults(func=_cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (HBNewtonError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
