"""Command-line entry point: ``csfeedback``.

Exit status is 0 on success, 1 when a ``--validate`` check fails and 2 on
malformed arguments or an unreadable/invalid config file.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

import yaml

from .exceptions import DomainError
from .harness import SCHEMES, ExperimentConfig, load_config, run_sweep, write_csv

EXIT_OK, EXIT_VALIDATION, EXIT_USAGE = 0, 1, 2


def parse_users(text: str) -> list[int]:
    """``"a:b:step"`` (inclusive of ``b``) or a comma-separated list."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) == 3 else 1
            if step < 1 or stop < start:
                raise ValueError
            users = list(range(start, stop + 1, step))
        else:
            users = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad --users value {text!r}; use a:b:step or n1,n2,...")
    if not users or min(users) < 1:
        raise argparse.ArgumentTypeError(f"user counts must be >= 1, got {text!r}")
    return users


def parse_schemes(text: str) -> list[str]:
    schemes = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in schemes if s not in SCHEMES]
    if bad or not schemes:
        raise argparse.ArgumentTypeError(f"unknown schemes {bad}; choose from {', '.join(SCHEMES)}")
    return schemes


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="csfeedback",
        description="Monte Carlo comparison of CS-based and baseline user-scheduling feedback.",
    )
    p.add_argument("--config", help="YAML/JSON file of ExperimentConfig fields")
    p.add_argument("--schemes", type=parse_schemes, help=f"comma list from {', '.join(SCHEMES)}")
    p.add_argument("--users", type=parse_users, help="user counts, a:b:step or n1,n2,...")
    p.add_argument("--trials", type=_positive_int, help="trials per (scheme, N)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--tau", type=float, help="mini-slot length as a fraction of coherence time")
    p.add_argument("--out", help="CSV output path (default: standard output)")
    p.add_argument("--validate", action="store_true", help="run the consistency checks instead")
    p.add_argument("--checks", help="comma list restricting --validate to some checks")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {
        k: v
        for k, v in {
            "schemes": args.schemes, "users": args.users, "trials": args.trials,
            "seed": args.seed, "tau": args.tau, "output": args.out,
        }.items()
        if v is not None
    }
    return replace(cfg, **overrides)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s"
    )
    try:
        config = _config(args)
    except (OSError, DomainError, TypeError, yaml.YAMLError) as exc:
        print(f"csfeedback: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.validate:
        from .validation import CHECKS, format_table, run_checks

        names = None
        if args.checks:
            names = [c.strip() for c in args.checks.split(",") if c.strip()]
            unknown = [c for c in names if c not in CHECKS]
            if unknown:
                print(f"csfeedback: error: unknown checks {unknown}; choose from {list(CHECKS)}",
                      file=sys.stderr)
                return EXIT_USAGE
        results = run_checks(config, names)
        print(format_table(results))
        return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION

    results = run_sweep(config)
    try:
        if config.output:
            write_csv(results, config.output)
        else:
            write_csv(results, sys.stdout)
    except OSError as exc:
        print(f"csfeedback: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
