"""Command line entry point: ``persuade run | gen | accept``.

Exit codes: 0 success, 1 criterion failure, 2 usage error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import MalformedInstanceError, NumericalFailure, OracleScaleError
from .generators import FAMILIES, generate_instance
from .model import dump_instance

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="persuade", description="Online private persuasion experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one online experiment from a JSON config")
    run.add_argument("--config", required=True)

    gen = sub.add_parser("gen", help="write a seeded random instance")
    gen.add_argument("--family", required=True, choices=FAMILIES)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--m", type=int, required=True)
    gen.add_argument("--d", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    acc = sub.add_parser("accept", help="run an acceptance suite")
    acc.add_argument("--suite", required=True)
    acc.add_argument("--seed", type=int, default=0)
    acc.add_argument("--json", help="also write the report here")
    return p


def main(argv=None) -> int:
    # argparse exits with 2 on bad usage, matching the usage exit code.
    args = _parser().parse_args(argv)
    # Imported late so that `persuade gen` stays light.
    from . import harness

    try:
        if args.command == "gen":
            dump_instance(generate_instance(args.family, args.n, args.m, args.d, args.seed), args.out)
            return EXIT_OK
        if args.command == "run":
            cfg = harness.ExperimentConfig.load(args.config)
            summary = harness.run_experiment(cfg)
            print(json.dumps({k: summary[k] for k in ("regret", "bound", "pass")}))
            return EXIT_FAIL if summary["pass"] is False else EXIT_OK
        if args.command == "accept":
            if args.suite != "all" and args.suite not in harness.SUITES:
                print(f"persuade: unknown suite {args.suite!r}", file=sys.stderr)
                return EXIT_USAGE
            results = harness.run_acceptance(args.suite, args.seed)
            for r in results:
                print(r.line())
            rep = harness.report(results)
            if args.json:
                with open(args.json, "w") as fh:
                    json.dump(rep, fh, indent=2)
            return EXIT_OK if rep["passed"] else EXIT_FAIL
    except NumericalFailure as exc:
        print(f"persuade: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MalformedInstanceError, OracleScaleError, ValueError, KeyError, OSError) as exc:
        print(f"persuade: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
