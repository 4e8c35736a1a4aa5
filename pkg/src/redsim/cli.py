"""Command-line interface.

Commands::

    redsim simulate --config FILE|PRESET [--out CSV] [--seed N]
                    [--jobs N] [--workers N] [--trace CSV]
    redsim analyze --config FILE|PRESET [--out CSV]
    redsim decide --dist LITERAL --n N --load {low,high}
    redsim probe-conjecture --dist LITERAL --n N [--lambdas CSV]
                    [--jobs N] [--seed N] [--workers N]

--config accepts a path or the name of a bundled preset (fig5..fig10).
Exit codes: 0 success, 1 validation error, 2 runtime error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from .analysis import ConfigurationError
from .experiments import (
    Load,
    analyze_scenarios,
    conjecture_probe,
    decision_report,
    emit_csv,
    run_scenarios,
)
from .scenarios import load_config, parse_dist_literal
from .simulator import run, write_trace

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_IO = 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(f"{self.prog}: {message}", EXIT_VALIDATION)


def preset_names() -> list[str]:
    root = resources.files("redsim.presets")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def _resolve_config(arg: str):
    """A --config value is a file path or the name of a bundled preset."""
    path = Path(arg)
    if path.exists():
        return load_config(path)
    if "/" not in arg and "\\" not in arg:
        ref = resources.files("redsim.presets") / f"{arg}.toml"
        if ref.is_file():
            from .scenarios import parse_config_text

            return parse_config_text(ref.read_text(encoding="utf-8"), "toml",
                                     default_name=arg)
    raise CliError(
        f"config {arg!r} is neither a file nor a preset "
        f"(presets: {', '.join(preset_names())})", EXIT_VALIDATION)


def _write_rows(rows, out: str | None) -> None:
    try:
        if out is None:
            emit_csv(rows, sys.stdout)
        else:
            emit_csv(rows, out)
    except OSError as exc:
        raise CliError(f"cannot write {out!r}: {exc}", EXIT_IO) from exc


def _cmd_simulate(args) -> int:
    scenarios = _resolve_config(args.config)
    if args.trace is not None:
        points = [p for sc in scenarios for p in sc.points()]
        if len(points) != 1:
            raise CliError("--trace needs a config that resolves to exactly "
                           f"one sweep point, found {len(points)}", EXIT_VALIDATION)
    try:
        rows = run_scenarios(scenarios, jobs=args.jobs, seed=args.seed,
                             workers=args.workers)
    except ConfigurationError as exc:
        raise CliError(str(exc), EXIT_VALIDATION) from exc
    _write_rows(rows, args.out)
    if args.trace is not None:
        point = [p for sc in scenarios for p in sc.points()][0]
        if args.jobs is not None or args.seed is not None:
            from dataclasses import replace

            point = replace(point,
                            jobs=args.jobs if args.jobs is not None else point.jobs,
                            seed=args.seed if args.seed is not None else point.seed)
        try:
            write_trace(run(point).records, args.trace)
        except OSError as exc:
            raise CliError(f"cannot write trace {args.trace!r}: {exc}", EXIT_IO) from exc
    return EXIT_OK


def _cmd_analyze(args) -> int:
    rows = analyze_scenarios(_resolve_config(args.config))
    _write_rows(rows, args.out)
    return EXIT_OK


def _parse_dist(text: str):
    try:
        return parse_dist_literal(text)
    except (ConfigurationError, ValueError) as exc:
        raise CliError(str(exc), EXIT_VALIDATION) from exc


def _cmd_decide(args) -> int:
    report = decision_report(_parse_dist(args.dist), args.n, Load(args.load))
    print(report.render())
    return EXIT_OK


def _cmd_probe(args) -> int:
    dist = _parse_dist(args.dist)
    lambdas = []
    for chunk in args.lambdas.split(","):
        try:
            lambdas.append(float(chunk))
        except ValueError:
            raise CliError(f"bad --lambdas entry {chunk!r}", EXIT_VALIDATION) from None
    try:
        report = conjecture_probe(dist, args.n, lambdas, jobs=args.jobs,
                                  seed=args.seed, workers=args.workers)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_VALIDATION) from exc
    print(report.render())
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="redsim",
                     description="replication latency/cost analysis and simulation")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="simulate a scenario config and emit CSV rows")
    sim.add_argument("--config", required=True, help="config file or preset name")
    sim.add_argument("--out", help="output CSV path (default: stdout)")
    sim.add_argument("--seed", type=int, help="override the config seed")
    sim.add_argument("--jobs", type=int, help="override jobs per point")
    sim.add_argument("--workers", type=int, help="parallel sweep workers")
    sim.add_argument("--trace", help="per-job trace CSV (single-point configs only)")
    sim.set_defaults(func=_cmd_simulate)

    ana = sub.add_parser("analyze", help="closed-form rows only, no simulation")
    ana.add_argument("--config", required=True, help="config file or preset name")
    ana.add_argument("--out", help="output CSV path (default: stdout)")
    ana.set_defaults(func=_cmd_analyze)

    dec = sub.add_parser("decide", help="recommend a redundancy strategy")
    dec.add_argument("--dist", required=True, help='distribution literal, e.g. '
                     '\'{kind = "shiftedexp", delta = 1.0, mu = 0.5}\'')
    dec.add_argument("--n", type=int, required=True, help="server count")
    dec.add_argument("--load", required=True, choices=["low", "high"])
    dec.set_defaults(func=_cmd_decide)

    probe = sub.add_parser("probe-conjecture",
                           help="check full-fork optimality for a log-convex law")
    probe.add_argument("--dist", required=True, help="distribution literal")
    probe.add_argument("--n", type=int, required=True, help="server count")
    probe.add_argument("--lambdas", default="0.5",
                       help="comma-separated arrival rates (default: 0.5)")
    probe.add_argument("--jobs", type=int, default=50_000)
    probe.add_argument("--seed", type=int, default=777)
    probe.add_argument("--workers", type=int)
    probe.set_defaults(func=_cmd_probe)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except ConfigurationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # pragma: no cover - unexpected failures
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
