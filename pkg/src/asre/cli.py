"""Command line: run, compare, sweep-lambda, verify.

Exit codes: 0 success, 1 failed verification, 2 configuration error.
"""
from __future__ import annotations

import argparse
import sys

from .harness import AGENTS, compare, lambda_sweep, load_config, run_experiment, summarize
from .mdp import ContractError

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _add_config_args(p: argparse.ArgumentParser):
    p.add_argument("-c", "--config", help="TOML experiment config")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config value, e.g. --set agent.lam=0.05 (repeatable)")
    p.add_argument("-o", "--output", help="output directory (overrides experiment.output_dir)")


def build_parser() -> argparse.ArgumentParser:
    # argparse exits with 2 on usage errors, which matches the config-error code
    parser = argparse.ArgumentParser(prog="asre", description="Sparse-action RL experiments and checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one agent over the configured seeds")
    _add_config_args(run)

    cmp = sub.add_parser("compare", help="train several agents on the same environment")
    _add_config_args(cmp)
    cmp.add_argument("--agents", default=",".join(AGENTS),
                     help=f"comma-separated subset of {','.join(AGENTS)}")

    sweep = sub.add_parser("sweep-lambda", help="final score per regularization strength")
    _add_config_args(sweep)
    sweep.add_argument("--lambdas", default="0.005,0.01,0.05,0.2", help="comma-separated values")

    ver = sub.add_parser("verify", help="run the acceptance checks and print PASS/FAIL lines")
    ver.add_argument("--only", help="comma-separated check numbers, e.g. 1,2,3")
    ver.add_argument("--quick", action="store_true", help="skip the training experiments (8-10)")
    return parser


def _config(args):
    config = load_config(args.config, args.overrides)
    return config.replace(output_dir=args.output) if args.output else config


def _floats(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ContractError(f"not a list of numbers: {text!r}") from None
    if not vals:
        raise ContractError("empty list")
    return vals


def _verify(args) -> int:
    from .verify import CHECKS, run_checks

    if args.only:
        try:
            numbers = sorted({int(x) for x in args.only.split(",")})
        except ValueError:
            raise ContractError(f"--only expects check numbers, got {args.only!r}") from None
        if set(numbers) - set(CHECKS):
            raise ContractError(f"unknown checks: {sorted(set(numbers) - set(CHECKS))}")
    else:
        numbers = [n for n in sorted(CHECKS) if not (args.quick and n in (8, 9, 10))]
    results = run_checks(numbers)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_FAILED if failed else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return _verify(args)
        config = _config(args)
        if args.command == "run":
            s = summarize(run_experiment(config))
            print(f"{config.agent}: final score {s['final_mean']:.4f} +/- {s['final_std']:.4f}, "
                  f"sparse execution frequency {s['exploration_freq']:.4f} -> {config.output_dir}")
        elif args.command == "compare":
            agents = [a.strip() for a in args.agents.split(",") if a.strip()]
            for name, recs in compare(config, agents).items():
                s = summarize(recs)
                print(f"{name}: final score {s['final_mean']:.4f} +/- {s['final_std']:.4f}, "
                      f"sparse execution frequency {s['exploration_freq']:.4f}")
        else:
            for row in lambda_sweep(config, _floats(args.lambdas)):
                print(f"lambda {row['lambda']:g}: {row['mean']:.4f} +/- {row['std']:.4f}")
    except ContractError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
