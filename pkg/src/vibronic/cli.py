"""Command-line entry point.

    vibronic <subcommand> [--config FILE] [--set key=value ...] [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 convergence-audit failure,
4 integrator failure.
"""

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .dynamics import IntegratorError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_AUDIT = 3
EXIT_INTEGRATOR = 4

SUBCOMMANDS = {
    "ramp": "ramp",
    "sweep": "sweep",
    "entropy-map": "entropy_map",
    "scaling": "scaling",
    "open-sweep": "open_sweep",
    "wigner": "wigner",
    "lzs": "lzs",
    "parametric": "parametric",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="vibronic", description="Pulse-driven Dicke-model experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
        p.add_argument("--out", help="output directory (overrides output_dir)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.overrides, experiment=SUBCOMMANDS[args.command])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    # imported late so configuration errors never pay for numba start-up
    from .experiments import run_experiment

    try:
        result = run_experiment(cfg, args.out)
    except IntegratorError as exc:
        print(f"integrator failure: {exc}", file=sys.stderr)
        return EXIT_INTEGRATOR
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name, path in result.files.items():
        print(path)
    if not result.audit_passed:
        audit = result.manifest["convergence_audit"]
        print(f"convergence audit failed: max delta {audit['max_delta']:.3e} > {audit['tolerance']:g}",
              file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
