"""Command line entry point.

    microlab run SCENARIO --out DIR [--oracle] [--seed N] [--format table|summary|both]
    microlab validate SCENARIO
    microlab list-checks

Exit codes: 0 all checks pass, 1 a check or stage failed, 2 usage or
configuration error.  ``MICROLAB_MAX_DIM`` overrides the Fock dimension cap.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .errors import LabError, ScenarioError
from .kernel import max_dim
from .pipeline import CHECKS, StageError, run
from .report import FORMATS, emit
from .scenario import load_scenario

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="microlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute a scenario and write its results")
    r.add_argument("scenario", type=Path)
    r.add_argument("--out", type=Path, required=True, help="output directory")
    r.add_argument("--oracle", action="store_true", help="add full-space cross-checks")
    r.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    r.add_argument("--format", choices=FORMATS, default="both")

    v = sub.add_parser("validate", help="check a scenario file without running it")
    v.add_argument("scenario", type=Path)

    sub.add_parser("list-checks", help="list check names and default tolerances")
    return p


def _print_checks(manifest, out):
    width = max((len(c.name) for c in manifest.checks), default=0)
    for c in manifest.checks:
        flag = "PASS" if c.passed else "FAIL"
        print(f"{flag}  {c.name:<{width}}  {c.value:.3e} <= {c.tolerance:.1e}", file=out)


def cmd_run(args, out):
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        raise ScenarioError(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
    scenario = load_scenario(args.scenario)
    start = time.perf_counter()
    manifest = run(scenario, oracle=args.oracle or None, seed=args.seed)
    elapsed = time.perf_counter() - start
    paths = emit(manifest, args.out, args.format)
    timing = args.out / "timing.json"
    timing.write_text(json.dumps({"seconds": elapsed}) + "\n")
    _print_checks(manifest, out)
    n_fail = sum(not c.passed for c in manifest.checks)
    print(f"{len(manifest.checks) - n_fail}/{len(manifest.checks)} checks passed; "
          f"{len(paths)} files in {args.out} ({elapsed:.2f} s)", file=out)
    return EXIT_OK if manifest.passed else EXIT_FAIL


def cmd_validate(args, out):
    scenario = load_scenario(args.scenario)
    d1, d2 = scenario.region_dims
    print(f"ok: {scenario.name} ({scenario.statistics})", file=out)
    print(f"dimension estimate: {scenario.dimension_estimate} = {d1} x {d2} (cap {max_dim()})", file=out)
    print(f"digest: {scenario.digest}", file=out)
    return EXIT_OK


def cmd_list_checks(args, out):
    width = max(len(k) for k in CHECKS)
    for name, (tol, oracle_only, text) in CHECKS.items():
        tag = " [oracle]" if oracle_only else ""
        print(f"{name:<{width}}  {tol:.0e}  {text}{tag}", file=out)
    return EXIT_OK


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    handler = {"run": cmd_run, "validate": cmd_validate, "list-checks": cmd_list_checks}[args.command]
    try:
        return handler(args, out)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
