"""Command-line entry point: ``pfsburst run-sweep | user-sweep | validate``.

Exit codes: 0 success, 1 a validation invariant failed, 2 configuration
error, 3 runtime failure (partial outputs are flagged with a PARTIAL file).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys

from pfsburst.config import ExperimentConfig, defaults_yaml
from pfsburst.errors import ConfigError
from pfsburst import experiment

EXIT_OK, EXIT_INVALID, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="pfsburst", description="PF scheduling rate estimators under bursty traffic")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    for name, help_ in (("run-sweep", "sweep the traffic load and write error CSVs"),
                        ("user-sweep", "sweep users per cell at a fixed load")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("config", nargs="?", help="YAML configuration (defaults apply to missing fields)")
        s.add_argument("--out", help="output directory (overrides 'out')")
        s.add_argument("--seeds", type=int, metavar="N", help="use seeds 0..N-1")
        s.add_argument("--print-defaults", action="store_true", help="print the default configuration and exit")

    s = sub.add_parser("validate", help="check estimator invariants")
    s.add_argument("config", nargs="?")
    s.add_argument("--print-defaults", action="store_true")
    return p


def _load(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_mapping({})
    changes = {}
    if getattr(args, "seeds", None) is not None:
        if args.seeds < 1:
            raise ConfigError("--seeds must be at least 1")
        changes["seeds"] = list(range(args.seeds))
    if getattr(args, "out", None):
        changes["out"] = args.out
    return cfg.replace(**changes) if changes else cfg


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    if args.print_defaults:
        sys.stdout.write(defaults_yaml())
        return EXIT_OK
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        try:
            checks = experiment.validate_estimators(cfg)
        except Exception as exc:  # noqa: BLE001
            print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["check", "status", "detail"])
        for c in checks:
            w.writerow([c.name, c.status, c.detail])
        return EXIT_OK if all(c.status == "pass" for c in checks) else EXIT_INVALID

    runner = experiment.run_sweep if args.command == "run-sweep" else experiment.run_user_sweep
    try:
        result = runner(cfg)
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {len(result.detail_files)} detail files and summary.csv to {result.out_dir}")
    if not result.ok:
        print(f"{len(result.failures)} task(s) failed; outputs are partial", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
