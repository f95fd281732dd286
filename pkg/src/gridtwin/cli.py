"""``gridtwin`` command line.

Exit codes: 0 success, 1 violations found (``assess``/``contingency``; also
an infeasible ``redispatch``), 2 usage error, 3 data error, 4 solver failure.
Log verbosity follows ``GRIDTWIN_LOG`` (DEBUG, INFO, WARNING, ...).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import cae, harness, report
from .config import ConfigError, RunConfig, load_config
from .ingestion import MeasurementError, iter_measurements
from .network import NetworkError, compile_network, load_network
from .powerflow import PowerFlowError, solve_power_flow
from .rsae import assess, assess_rows, write_jsonl
from .smfae import INFEASIBLE, OPTIMAL, build_problem, solve

EXIT_OK, EXIT_VIOLATIONS, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3, 4

log = logging.getLogger("gridtwin")


class UsageError(Exception):
    pass


def _setup_logging():
    level = os.environ.get("GRIDTWIN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return cfg.with_overrides(network=args.network, measurements=args.measurements,
                              out=args.out, jobs=args.jobs)


def _emit(text, out=None, name=None):
    if out:
        p = Path(out)
        p.mkdir(parents=True, exist_ok=True)
        (p / name).write_text(text)
    else:
        sys.stdout.write(text)


def _point_at(cfg, at, scale):
    net, series, hist, _ = harness.load_inputs(cfg)
    k = series.index_of(at)
    point = series.point(k)
    return net, series, hist, k, (point.scaled_load(scale) if scale != 1.0 else point)


# --------------------------------------------------------------------------
# subcommands

def cmd_validate(args, cfg):
    cfg.require_paths("network")
    net = load_network(cfg.network)
    print(f"network {net.name or cfg.network}: {len(net.buses)} buses, {len(net.lines)} lines, "
          f"{len(net.transformers)} transformers, {len(net.generators)} generators, "
          f"{len(net.loads)} loads: ok")
    if cfg.measurements is not None:
        cfg.require_paths("measurements")
        n, subs, stamps = 0, set(), set()
        for rec in iter_measurements(cfg.measurements):
            n += 1
            subs.add(rec.substation_id)
            stamps.add(rec.timestamp)
        names = {b.name for b in net.buses}
        unknown = sorted(subs - names)
        if unknown:
            raise MeasurementError(f"substation(s) {unknown} match no bus name")
        print(f"measurements {cfg.measurements}: {n} records, {len(subs)} substations, "
              f"{len(stamps)} timestamps: ok")
    return EXIT_OK


def cmd_powerflow(args, cfg):
    if not args.at:
        raise UsageError("powerflow needs --at TIMESTAMP")
    net, _, _, _, point = _point_at(cfg, args.at, args.scale)
    sol = solve_power_flow(net, point, cfg.solver)
    _emit(json.dumps(sol.to_dict(), indent=1) + "\n", args.out, "powerflow.json")
    return EXIT_OK


def cmd_assess(args, cfg):
    net, series, _, _ = harness.load_inputs(cfg)
    if args.at:
        series = series.subset([series.index_of(args.at)])
    if args.scale != 1.0:
        series = series.scaled_load(args.scale)
    c = compile_network(net)
    res, br, viol, _ = harness._flow(c, series, cfg.solver, cfg.limits)
    labels = [series.label(k) for k in range(len(series))]
    reports = assess_rows(labels, c.bus_ids, res.vm, c.branch_refs, br.loading_percent,
                         cfg.limits, rows=np.flatnonzero(viol))
    diverged = int((res.status != 0).sum())
    for rep in reports:
        print(rep.summary())
    print(f"assessed {len(series)} timestamp(s): {len(reports)} with violations, {diverged} diverged")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        with open(Path(args.out) / "violations.jsonl", "w", encoding="utf-8") as fh:
            write_jsonl(reports, fh)
    if diverged:
        return EXIT_SOLVER
    return EXIT_VIOLATIONS if reports and not args.no_check else EXIT_OK


def cmd_contingency(args, cfg):
    net, series, _, _ = harness.load_inputs(cfg)
    if args.at:
        series = series.subset([series.index_of(args.at)])
    else:
        series = series.subset(np.arange(0, len(series), cfg.cae_stride))
    if args.scale != 1.0:
        series = series.scaled_load(args.scale)
    elements = [args.contingency] if args.contingency else None
    cases = cae.sweep(net, series, cfg.limits, cfg.solver, jobs=cfg.jobs, elements=elements)
    summaries = cae.summarize(cases)
    for s in summaries:
        print(f"{s.element}: {s.outcome} ({s.counts[cae.VIOLATIONS]} with violations, "
              f"{s.counts[cae.DIVERGED]} diverged, {s.counts[cae.DEGENERATE]} degenerate, "
              f"of {s.cases}; islanded buses {s.islanded})")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "contingencies.jsonl", "w", encoding="utf-8") as fh:
            for cs in cases.values():
                cae.write_jsonl(cs, fh, only_insecure=not args.all_cases)
        with open(out / "contingency_summary.csv", "w", encoding="utf-8", newline="") as fh:
            cae.write_summary_csv(summaries, fh)
    bad = any(s.counts[cae.VIOLATIONS] or s.counts[cae.DIVERGED] for s in summaries)
    return EXIT_VIOLATIONS if bad and not args.no_check else EXIT_OK


def cmd_redispatch(args, cfg):
    if not args.at:
        raise UsageError("redispatch needs --at TIMESTAMP")
    net, series, hist, k, _ = _point_at(cfg, args.at, 1.0)
    c = compile_network(net)
    # Base Case at this timestamp: the measured point, repaired if insecure
    measured = series.point(k)
    sol = solve_power_flow(c, measured, cfg.solver)
    base_point, p_ext_base = measured, sol.p_ext_mw
    if not assess(sol, cfg.limits).secure:
        fix = solve(build_problem(c, measured, "corrective", cfg.redispatch, hist,
                                  sol.p_ext_mw, (sol.vm_pu, sol.va_rad), fix_import=False),
                    point=measured)
        if fix.status != OPTIMAL:
            print(f"base case at {measured.timestamp} cannot be made secure: {fix.message}",
                  file=sys.stderr)
            return EXIT_SOLVER if fix.status != INFEASIBLE else EXIT_VIOLATIONS
        gp, gq = measured.gen_p_mw.copy(), measured.gen_q_mvar.copy()
        gp[c.gen_idx], gq[c.gen_idx] = fix.p_new_mw, fix.q_new_mvar
        base_point, p_ext_base = measured.with_generation(gp, gq), fix.p_ext_mw
    point = base_point.scaled_load(args.scale) if args.scale != 1.0 else base_point
    if args.contingency:
        topo = cae.prepare_outage(net, args.contingency)
        if topo.degenerate:
            print(topo.error, file=sys.stderr)
            return EXIT_VIOLATIONS
        prob = build_problem(topo.compiled, point, f"preventive:{topo.element}", cfg.redispatch,
                             hist, p_ext_base, islanded_buses=topo.islanded)
    else:
        prob = build_problem(c, point, "corrective", cfg.redispatch, hist, p_ext_base)
    sched = solve(prob, point=point)
    _emit(sched.to_json(indent=1) + "\n", args.out, "setpoints.json")
    print(f"{sched.timestamp} {sched.mode}: {sched.status}, objective {sched.objective:.6g}, "
          f"{sched.iterations} iterations", file=sys.stderr)
    if sched.status == OPTIMAL:
        return EXIT_OK
    return EXIT_VIOLATIONS if sched.status == INFEASIBLE else EXIT_SOLVER


def cmd_run(args, cfg):
    if args.scale != 1.0:
        from .config import Scenario
        cfg = cfg.with_overrides(scenarios=(Scenario("base", 1.0, cae=True),
                                            Scenario(f"scale{args.scale:g}", args.scale)))
    out, timings = harness.run(cfg)
    print(f"run written to {out}")
    return EXIT_OK


def cmd_report(args, cfg):
    if not args.run:
        raise UsageError("report needs --run RUN_DIR")
    written = report.generate(args.run, args.out, scenario=args.scenario)
    for p in written:
        print(p)
    return EXIT_OK


COMMANDS = {
    "validate": (cmd_validate, "check network and measurement files"),
    "powerflow": (cmd_powerflow, "solve one timestamp and print the solution"),
    "assess": (cmd_assess, "security assessment over a timestamp or the whole horizon"),
    "contingency": (cmd_contingency, "N-1 sweep"),
    "redispatch": (cmd_redispatch, "corrective or preventive redispatch for one timestamp"),
    "run": (cmd_run, "all configured scenarios end to end"),
    "report": (cmd_report, "plot-ready CSVs and summary from a run directory"),
}


def build_parser():
    ap = argparse.ArgumentParser(prog="gridtwin", description="Distribution-grid digital twin engines.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--network")
        p.add_argument("--measurements")
        p.add_argument("--config")
        p.add_argument("--out")
        p.add_argument("--scale", type=float, default=1.0)
        p.add_argument("--at", help="ISO-8601 timestamp, e.g. 2025-06-01T12:00Z")
        p.add_argument("--contingency", help="branch reference, e.g. line:3 or trafo:7")
        p.add_argument("--jobs", type=int)
        if name in ("assess", "contingency"):
            p.add_argument("--no-check", action="store_true", help="exit 0 even if violations are found")
        if name == "contingency":
            p.add_argument("--all-cases", action="store_true", help="also write secure cases")
        if name == "report":
            p.add_argument("--run", help="run directory")
            p.add_argument("--scenario", help="scenario for voltage_envelope.csv (default: first)")
    return ap


def main(argv=None):
    _setup_logging()
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if exc.code not in (None, 0) else 0
    if args.scale is not None and not args.scale > 0:
        print("gridtwin: --scale must be positive", file=sys.stderr)
        return EXIT_USAGE
    if args.jobs is not None and args.jobs < 1:
        print("gridtwin: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    fn = COMMANDS[args.command][0]
    try:
        cfg = _config(args)
        return fn(args, cfg)
    except UsageError as exc:
        print(f"gridtwin {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    # RedispatchError (missing historical maxima, no generators) is a ValueError: data error
    except (ConfigError, NetworkError, MeasurementError, KeyError, ValueError,
            FileNotFoundError, report.ReportError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"gridtwin {args.command}: data error: {msg}", file=sys.stderr)
        return EXIT_DATA
    except (PowerFlowError, harness.BaseCaseError) as exc:
        print(f"gridtwin {args.command}: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
