"""Command-line entry point: ``microkin run`` and ``microkin suites``."""
import argparse
import json
import sys

from .scenario import EXIT_INVALID, SUITE_HELP, SUITES, clean, run_scenario


def build_parser():
    p = argparse.ArgumentParser(prog="microkin", description="Micro-structured continuum kinematics checks.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario file")
    r.add_argument("scenario", help="path to a scenario JSON file")
    r.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    r.add_argument("--suite", action="append", choices=SUITES + ("all",), help="suite to run (repeatable)")
    r.add_argument("--out", default=None, help="output directory (default: scenario output.dir or ./out)")
    r.add_argument("--tol-scale", type=float, default=None, help="multiply every tolerance by S")
    r.add_argument("--allow-invalid", action="store_true", help="run suites even if validation fails")
    sub.add_parser("suites", help="list available suites")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "suites":
        for name in SUITES + ("all",):
            print(f"{name:<12}{SUITE_HELP[name]}")
        return 0
    res = run_scenario(
        args.scenario,
        seed=args.seed,
        suites=args.suite,
        out=args.out,
        tol_scale=args.tol_scale,
        allow_invalid=args.allow_invalid,
    )
    if res.exit_code == EXIT_INVALID and "error" in res.report:
        print(json.dumps(clean({"error": res.report["error"]}), sort_keys=True), file=sys.stderr)
    summary = {name: r.get("passed") for name, r in res.report.get("suites", {}).items()}
    print(json.dumps({"exit_code": res.exit_code, "out": str(res.out_dir), "suites": summary}, sort_keys=True))
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
