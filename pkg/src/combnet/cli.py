"""Command-line interface.

Subcommands map to pipeline stages sharing one run directory:

    combnet plan      --config CFG [--seed N] [--out DIR]
    combnet simulate  --config CFG ...        (plan + simulate)
    combnet analyze   --config CFG ...        (plan + simulate + analyze)
    combnet qkd       --config CFG ...        (plan + qkd)
    combnet stabilize --config CFG ...
    combnet report    --config CFG --out DIR  (aggregate metrics)
    combnet compare   --run DIR --golden DIR [--tolerances FILE]

``--config`` takes a preset name (combnet presets to list them) or a
JSON file. Exit codes: 0 ok, 1 validation error, 2 runtime/stage error,
3 golden mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import CombnetError, StageError, ValidationError
from .presets import PRESETS
from .scenario import compare_golden, run_scenario

_STAGE_DEFAULTS = {
    "plan": ["plan"],
    "simulate": ["plan", "simulate"],
    "analyze": ["plan", "simulate", "analyze"],
    "qkd": ["plan", "qkd"],
    "stabilize": ["stabilize"],
    "report": ["report"],
}

# Sweep scenarios simulate per point inside analyze; skip the point
# simulate stage for them.
_SWEEP_ANALYZE = ["plan", "analyze"]

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_GOLDEN_MISMATCH = 3


def _add_run_arguments(sub):
    sub.add_argument("--config", required=True, help="preset name or JSON file")
    sub.add_argument("--seed", type=int, default=None, help="override the root seed")
    sub.add_argument("--out", default="run_out", help="run directory")
    sub.add_argument(
        "--stages",
        default=None,
        help="comma-separated stage list overriding the subcommand default",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="combnet",
        description="Planner and simulator for comb-source DWDM entanglement networks",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in ("plan", "simulate", "analyze", "qkd", "stabilize", "report"):
        sub = subparsers.add_parser(name, help=f"run the {name} stage")
        _add_run_arguments(sub)

    comp = subparsers.add_parser("compare", help="compare a run against a golden run")
    comp.add_argument("--run", required=True)
    comp.add_argument("--golden", required=True)
    comp.add_argument(
        "--tolerances",
        default=None,
        help="JSON file mapping metric patterns to {'abs': x, 'rel': y}",
    )

    subparsers.add_parser("presets", help="list shipped scenario presets")
    return parser


def _stages_for(command: str, args) -> list[str]:
    if args.stages:
        return [s.strip() for s in args.stages.split(",") if s.strip()]
    if command == "analyze":
        try:
            from .scenario import load_config

            kind = load_config(args.config).get("kind", "point")
        except Exception:
            kind = "point"
        if kind in ("power_sweep", "fringe_sweep"):
            return list(_SWEEP_ANALYZE)
    return list(_STAGE_DEFAULTS[command])


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "presets":
        for name in sorted(PRESETS):
            print(f"{name}: kind={PRESETS[name]['kind']}")
        return EXIT_OK

    if args.command == "compare":
        tolerances = None
        if args.tolerances:
            tolerances = json.loads(Path(args.tolerances).read_text())
        try:
            ok, lines = compare_golden(args.run, args.golden, tolerances)
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            print(f"comparison failed: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        for line in lines:
            print(line)
        print("RESULT:", "PASS" if ok else "FAIL")
        return EXIT_OK if ok else EXIT_GOLDEN_MISMATCH

    try:
        manifest = run_scenario(
            args.config,
            args.out,
            stages=_stages_for(args.command, args),
            seed_override=args.seed,
        )
    except ValidationError as exc:
        print("configuration invalid:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_VALIDATION
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_RUNTIME
    except CombnetError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION

    print(
        f"scenario '{manifest['scenario_name']}' "
        f"stages {','.join(manifest['stages_run'])} -> {args.out}"
    )
    if args.command == "plan":
        table = Path(args.out) / "plan" / "allocation.txt"
        if table.exists():
            print(table.read_text(), end="")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
