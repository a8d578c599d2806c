"""``vclab`` command-line driver."""

from __future__ import annotations

import argparse
import sys

from . import experiments
from .errors import VCError


def _epsilons(raw: str):
    return tuple(float(v) for v in raw.replace(",", " ").split())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--epsilon", type=_epsilons, help="one value or a comma-separated sweep")
    common.add_argument("--mach", type=float)
    common.add_argument("--length", type=float)
    common.add_argument("--horizon", type=float)
    common.add_argument("--modes", type=int)
    common.add_argument("--precision-bits", type=int)
    common.add_argument("--grid", type=int)
    common.add_argument("--dt", type=float)
    common.add_argument("--out")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)

    p = argparse.ArgumentParser(prog="vclab", description="vanishing-viscosity controllability lab")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("constants", parents=[common], help="C1, C2 and the four thresholds")
    sub.add_parser("thresholds", parents=[common], help="time thresholds for the configured M, L")
    sub.add_parser("verify-identities", parents=[common], help="quadrature identities and Phi checks")
    sub.add_parser("cost-sweep", parents=[common], help="log K_N across an epsilon sweep")
    for name in ("control-run", "simulate"):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("--datum", help="mode:K, sines:a,b,... or zero (default mode:1)")
    sc = sub.add_parser("scaling-check", parents=[common], help="cost scaling relations")
    sc.add_argument("-a", "--factor", type=float, action="append",
                    help="scaling factor (repeatable; default 16 and 1/16)")
    sc.add_argument("--rescaled", action="store_true",
                    help="use the exponents obtained from rescaling the PDE")
    return p


_OVERRIDES = ("epsilon", "mach", "length", "horizon", "modes", "precision_bits",
              "grid", "dt", "out", "seed", "workers")


def run(argv=None) -> experiments.Report:
    args = build_parser().parse_args(argv)
    config = experiments.load_config(args.config, **{k: getattr(args, k) for k in _OVERRIDES})
    cmd = args.command
    if cmd == "constants":
        return experiments.cmd_constants(config)
    if cmd == "thresholds":
        return experiments.cmd_thresholds(config)
    if cmd == "verify-identities":
        return experiments.cmd_verify_identities(config)
    if cmd == "cost-sweep":
        return experiments.cmd_cost_sweep(config)
    if cmd == "control-run":
        return experiments.cmd_control_run(config, experiments.parse_datum(args.datum))
    if cmd == "simulate":
        return experiments.cmd_simulate(config, experiments.parse_datum(args.datum))
    factors = tuple(args.factor) if args.factor else (16.0, 1 / 16)
    return experiments.cmd_scaling_check(config, factors, rescaled=args.rescaled)


def main(argv=None) -> int:
    try:
        report = run(argv)
    except VCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for line in report.lines():
        print(line)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
