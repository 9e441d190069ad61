"""Command line scenario runner.

    hilbundle run --config scenario.yaml [--suite NAME ...] [--report out.json]
                  [--tables DIR] [--seed N] [--grid N] [--quad-nodes N] [--timings]

Exit status: 0 when every check passes, 1 when a check fails, 2 on a
configuration error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import __version__
from .report import CheckReport, Table
from .scenario import (STANDARD_TABLES, SUITES, ConfigError, apply_overrides, empty_table,
                       load_config, run_scenario)

log = logging.getLogger("hilbundle")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hilbundle", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write its check report")
    run.add_argument("--config", required=True, help="scenario YAML file")
    run.add_argument("--suite", action="append", choices=SUITES,
                     help="restrict to this suite (repeatable)")
    run.add_argument("--report", help="write the JSON report here (default: stdout)")
    run.add_argument("--tables", help="directory for CSV tables and PNG figures")
    run.add_argument("--seed", type=_u64, help="override the scenario seed")
    run.add_argument("--grid", type=_positive, help="points per axis on every axis")
    run.add_argument("--quad-nodes", type=_positive, help="quadrature node count")
    run.add_argument("--timings", action="store_true",
                     help="record wall times (reports are then no longer byte-identical)")
    run.add_argument("-q", "--quiet", action="store_true", help="no per-check lines on stderr")
    return parser


def _cell(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return "" if x is None else str(x)


def write_table(path: Path, table: Table) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.header)
        for row in table.rows:
            w.writerow([_cell(x) for x in row])


def checks_table(report: CheckReport) -> Table:
    return Table(["name", "passed", "measured", "relation", "bound", "tolerance"],
                 [[c.name, c.passed, c.measured, c.relation, c.bound, c.tolerance]
                  for c in report])


def emit_tables(report: CheckReport, outdir: str | Path) -> list[Path]:
    """Write ``checks.csv`` and every table of the report as CSV with a one-line header.

    The standard tables are always written, header-only when the report
    does not contain them.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    tables = {name: empty_table(name) for name in STANDARD_TABLES}
    tables.update(report.tables)
    path = outdir / "checks.csv"
    write_table(path, checks_table(report))
    written.append(path)
    for name in sorted(tables):
        path = outdir / f"{name}.csv"
        write_table(path, tables[name])
        written.append(path)
    return written


def run(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config)
        cfg = apply_overrides(cfg, args.seed, args.grid, args.quad_nodes, args.suite)
        report = run_scenario(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = report.to_json(timings=args.timings)
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    if args.tables:
        emit_tables(report, args.tables)
        from .plotting import render_figures
        render_figures(report, args.tables)
    if not args.quiet:
        for c in report:
            print(c.line(), file=sys.stderr)
    n_fail = len(report.failures())
    print(f"{len(report) - n_fail}/{len(report)} checks passed", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAIL


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run(args)
    return EXIT_CONFIG
