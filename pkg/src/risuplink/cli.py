"""Command line: ``risuplink run | list-presets | validate``.

Exit codes: 0 success, 2 usage or validation error, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import sys

from .experiments import PRESETS, ExperimentSpec, UsageError, list_presets, load_config_file, run, validate_report
from .rate_analytic import ScalingLaw

EXIT_USAGE = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="risuplink", description="Two-timescale RIS uplink experiments")
    sub = ap.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a preset sweep and write CSV")
    r.add_argument("preset", help="preset id (see list-presets)")
    r.add_argument("-o", "--output", required=True, help="CSV output path")
    r.add_argument("--config", help="JSON config file overriding preset fields")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--trials", type=int, help="Monte Carlo trials (baseline intervals for fig4-baseline); 0 skips MC")
    r.add_argument("--grid", type=_floats, help="comma separated sweep values")
    r.add_argument("--model", choices=("independent", "correlated"))
    r.add_argument("--schedule", choices=[s.value for s in ScalingLaw if s is not ScalingLaw.LARGE_RIS_RAYLEIGH], help="power scaling schedule applied to p")
    r.add_argument("--full", action="store_true", help="allow the large grids and trial counts")
    r.add_argument("--workers", type=int, default=1, help="processes for sweep points")
    r.add_argument("--timing", action="store_true", help="fill wall_time_s (makes the CSV run dependent)")
    r.add_argument("--trace-output", help="CSV path for optimizer convergence traces")

    sub.add_parser("list-presets", help="list the figure presets")

    v = sub.add_parser("validate", help="check a config file and echo it normalised")
    v.add_argument("config")
    return ap


def _run(args) -> int:
    overrides = load_config_file(args.config) if args.config else {}
    spec = ExperimentSpec(
        preset=args.preset,
        output=args.output,
        seed=args.seed,
        trials=args.trials,
        grid=args.grid,
        model=args.model,
        schedule=args.schedule,
        config=overrides,
        full=args.full,
        workers=args.workers,
        timing=args.timing,
        trace_output=args.trace_output,
    )
    summary = run(spec)
    print(f"{summary.preset}: {summary.rows} rows over {summary.axis} in {list(summary.grid)} -> {args.output}")
    for value, wall in zip(summary.grid, summary.wall):
        print(f"  {summary.axis}={value:g}: {wall:.2f} s")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "list-presets":
            width = max(len(p.name) for p in PRESETS)
            for name, desc in list_presets():
                print(f"{name:<{width}}  {desc}")
            return 0
        if args.verb == "validate":
            text, problems = validate_report(load_config_file(args.config))
            print(text, end="", file=sys.stderr if problems else sys.stdout)
            return EXIT_USAGE if problems else 0
        return _run(args)
    except UsageError as exc:
        for p in exc.problems:
            print(f"error: {p}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
