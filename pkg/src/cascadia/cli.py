"""Command-line entry point.

Exit codes: 0 success, 1 validation failure, 2 simulation error, 3 I/O error.
Diagnostics go to stderr; verbosity follows ``CASCADIA_LOG``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .cascade import analyze, write_plot_data, write_report
from .errors import CascadiaError, ValidationError
from .models import EXOGENOUS, make_micropolis
from .scenario import Scenario, load_scenario_file, read_trace, run, write_trace

OK, INVALID, SIM_ERROR, IO_ERROR = 0, 1, 2, 3

log = logging.getLogger("cascadia")

_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    level = _LEVELS.get(os.environ.get("CASCADIA_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)


def _load(path):
    try:
        return load_scenario_file(path), OK
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return None, IO_ERROR
    except ValidationError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return None, INVALID


def cmd_validate(args) -> int:
    _, code = _load(args.scenario)
    return code


def cmd_simulate(args) -> int:
    scenario, code = _load(args.scenario)
    if code:
        return code
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    try:
        trace = run(scenario)
    except CascadiaError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return SIM_ERROR
    try:
        write_trace(trace, args.out)
    except OSError as exc:
        print(f"error: cannot write trace: {exc}", file=sys.stderr)
        return IO_ERROR
    log.info("wrote %d rows and %d events to %s", len(trace), len(trace.events), args.out)
    return OK


def cmd_analyze(args) -> int:
    try:
        trace = read_trace(args.trace)
    except OSError as exc:
        print(f"error: cannot read trace: {exc}", file=sys.stderr)
        return IO_ERROR
    except (ValueError, KeyError, StopIteration) as exc:
        print(f"malformed trace: {exc}", file=sys.stderr)
        return INVALID
    report = analyze(trace)
    try:
        write_report(report, args.trace)
        if args.plot_data:
            write_plot_data(trace, args.trace)
    except OSError as exc:
        print(f"error: cannot write report: {exc}", file=sys.stderr)
        return IO_ERROR
    return OK


def cmd_describe(args) -> int:
    if args.scenario:
        scenario, code = _load(args.scenario)
        if code:
            return code
    else:
        scenario = Scenario()
    net = make_micropolis(scenario.params)
    desc = net.describe()
    desc["exogenous"] = dict(EXOGENOUS)
    if args.json:
        print(json.dumps(desc, indent=2))
        return OK
    print(f"composition {net.name}: {len(desc['nodes'])} nodes, {len(desc['connections'])} connections")
    print("nodes:")
    for node in desc["nodes"]:
        extra = f" modes={node['modes']}" if "modes" in node else ""
        if "level" in node:
            extra = f" level={node['level']:g}"
        print(f"  {node['name']} [{node['kind']}] in={node['inputs']} out={node['outputs']}{extra}")
    print("connections:")
    for c in desc["connections"]:
        print(f"  {c['source']:<20} -> {c['destination']:<20} {c['dependency_type']}")
    print("free inputs:")
    for port in desc["free_inputs"]:
        print(f"  {port}")
    return OK


def cmd_plot(args) -> int:
    try:
        trace = read_trace(args.trace)
    except OSError as exc:
        print(f"error: cannot read trace: {exc}", file=sys.stderr)
        return IO_ERROR
    from .plotting import render_figures

    for path in render_figures(trace, args.out or args.trace):
        log.info("wrote %s", path)
    return OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cascadia", description="Micropolis interdependency simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="run a scenario and write trace.csv and events.json")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="write cascade.json and metrics.json next to a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--plot-data", action="store_true", help="also write plotdata/*.dat")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("describe", help="print the composed model")
    p.add_argument("--json", action="store_true")
    p.add_argument("--scenario", help="take parameters from this scenario")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("plot", help="render PNG figures for a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", help="output directory (default: the trace directory)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
