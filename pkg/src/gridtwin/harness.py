"""Scenario orchestration: Base Case construction, load scaling, annual sweeps.

Work flows through whole-horizon batches wherever possible: one batched
power flow per scenario, then corrective redispatch only at the timestamps
that violate a limit. Redispatch solves fan out over ``jobs`` worker
processes; results are always merged back in timestamp order.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cae
from .config import RunConfig, Scenario
from .ingestion import aggregate_to_substation, historical_max, parse_measurements
from .network import Network, compile_network, load_network
from .powerflow import CONVERGED, OperatingSeries, compute_branch_results, solve_batch
from .rsae import assess_rows, violation_mask
from .smfae import INFEASIBLE, OPTIMAL, SOLVER_FAILURE, RedispatchError, build_problem, solve

log = logging.getLogger(__name__)

STEP_H = 0.25
ACTIVATION_EPS = 1e-6  # MW / MVAr below which a delta counts as "no activation"


class BaseCaseError(RuntimeError):
    def __init__(self, msg, timestamps=()):
        super().__init__(msg)
        self.timestamps = list(timestamps)


# --------------------------------------------------------------------------
# inputs

def series_from_substations(network: Network, subs: dict) -> tuple[OperatingSeries, np.ndarray]:
    """Map substation series onto equivalent units by bus name.

    Each substation id must name a bus; its generation (load) is split evenly
    over the in-service generators (loads) at that bus. Returns the operating
    series and the per-generator historical maximum (MW).
    """
    by_name = {b.name: b.id for b in network.buses}
    missing = sorted(s for s in subs if s not in by_name)
    if missing:
        raise ValueError(f"substation(s) {missing} do not match any bus name")
    stamps = None
    for s in subs.values():
        stamps = s.timestamps if stamps is None else np.intersect1d(stamps, s.timestamps)
    if stamps is None or not stamps.size:
        raise ValueError("no common timestamps across substations")
    T = stamps.size
    bus_sub = {by_name[k]: v for k, v in subs.items()}

    def spread(units, attr_p, attr_q):
        p = np.zeros((T, len(units)))
        q = np.zeros((T, len(units)))
        at_bus = {}
        for k, u in enumerate(units):
            if u.in_service:
                at_bus.setdefault(u.bus, []).append(k)
        for bus, ks in at_bus.items():
            s = bus_sub.get(bus)
            if s is None:
                continue
            sel = np.searchsorted(s.timestamps, stamps)
            for k in ks:
                p[:, k] = getattr(s, attr_p)[sel] / len(ks)
                q[:, k] = getattr(s, attr_q)[sel] / len(ks)
        return p, q, at_bus

    gp, gq, gen_at = spread(network.generators, "p_gen_mw", "q_gen_mvar")
    lp, lq, _ = spread(network.loads, "p_load_mw", "q_load_mvar")
    # Q_gen above is an injection, the sign the power flow expects for generators
    hist = np.zeros(len(network.generators))
    for bus, ks in gen_at.items():
        s = bus_sub.get(bus)
        if s is not None and len(s):
            for k in ks:
                hist[k] = historical_max(s.p_gen_mw) / len(ks)
    return OperatingSeries(stamps, lp, lq, gp, gq), hist


def load_inputs(cfg: RunConfig):
    cfg.require_paths("network", "measurements")
    net = load_network(cfg.network)
    subs = aggregate_to_substation(parse_measurements(cfg.measurements), cfg.gap_policy,
                                   cfg.pf_load, cfg.pf_gen)
    series, hist = series_from_substations(net, subs)
    gaps = sum(len(s.gaps) for s in subs.values())
    return net, series, hist, gaps


# --------------------------------------------------------------------------
# redispatch fan-out

_CTX = {}


def _init_worker(network, cfg_red, hist):
    _CTX.clear()
    _CTX.update(network=network, compiled=compile_network(network), cfg=cfg_red, hist=hist, topo={})


def _solve_task(task):
    """task = (key, point, mode, target, fix_import, warm, element)."""
    key, point, mode, target, fix_import, warm, element = task
    c = _CTX["compiled"]
    islanded = frozenset()
    if element is not None:
        topo = _CTX["topo"].get(element)
        if topo is None:
            topo = _CTX["topo"][element] = cae.prepare_outage(_CTX["network"], element)
        c, islanded = topo.compiled, topo.islanded
    try:
        prob = build_problem(c, point, mode, _CTX["cfg"], _CTX["hist"], target, warm,
                             islanded, fix_import=fix_import)
    except RedispatchError as exc:
        return key, None, str(exc)
    return key, solve(prob, point=point), ""


def solve_many(network, cfg: RunConfig, hist, tasks, jobs=1, label=""):
    """Run redispatch tasks, sequentially or across worker processes, in task order."""
    if not tasks:
        return []
    t0 = time.perf_counter()
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(network, cfg.redispatch, hist)) as pool:
            out = list(pool.map(_solve_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        _init_worker(network, cfg.redispatch, hist)
        out = []
        step = max(1, len(tasks) // 10)
        for n, t in enumerate(tasks, 1):
            out.append(_solve_task(t))
            if n % step == 0:
                log.info("%s redispatch: %d/%d solved", label, n, len(tasks))
    log.info("%s redispatch: %d problems in %.1f s", label, len(tasks), time.perf_counter() - t0)
    return out


# --------------------------------------------------------------------------
# Base Case

@dataclass
class BaseCase:
    network: Network
    measured: OperatingSeries
    series: OperatingSeries
    hist_max_mw: np.ndarray
    p_ext_mw: np.ndarray
    vm: np.ndarray
    va: np.ndarray
    adjustments: list = field(default_factory=list)

    @property
    def labels(self):
        return [self.series.label(k) for k in range(len(self.series))]


def _flow(c, series, opts, limits):
    res = solve_batch(c, series.load_p_mw, series.load_q_mvar, series.gen_p_mw,
                      series.gen_q_mvar, opts)
    br = compute_branch_results(c, res.vm, res.va)
    any_v, over, under, thermal = violation_mask(res.vm, br.loading_percent, limits)
    conv = res.status == CONVERGED
    return res, br, any_v & conv, (over & conv, under & conv, thermal & conv)


def build_base_case(network: Network, series: OperatingSeries, hist_max_mw, cfg: RunConfig,
                    jobs: int = 1) -> BaseCase:
    """Measured operation made violation-free by corrective redispatch.

    No import level exists yet, so the redispatch here leaves the external
    active exchange free. Fails listing every timestamp that diverges or
    cannot be repaired.
    """
    c = compile_network(network)
    res, br, viol, _ = _flow(c, series, cfg.solver, cfg.limits)
    bad = [series.label(k) for k in np.flatnonzero(res.status != CONVERGED)]
    if bad:
        raise BaseCaseError(f"base case: power flow diverged at {len(bad)} timestamp(s)", bad)
    rows = np.flatnonzero(viol)
    log.info("base case: %d of %d timestamps need adjustment", rows.size, len(series))
    tasks = [(int(k), series.point(k), "corrective", float(res.p_ext_mw[k]), False,
              (res.vm[k], res.va[k]), None) for k in rows]
    out = solve_many(network, cfg, hist_max_mw, tasks, jobs, "base case")
    gp = series.gen_p_mw.copy()
    gq = series.gen_q_mvar.copy()
    adjustments, failed = [], []
    for k, sched, err in out:
        if sched is None or sched.status != OPTIMAL:
            failed.append(series.label(k))
            log.error("base case %s: %s", series.label(k), err or sched.message)
            continue
        gens = c.gen_idx
        gp[k, gens] = sched.p_new_mw
        gq[k, gens] = sched.q_new_mvar
        adjustments.append(sched)
    if failed:
        raise BaseCaseError(f"base case: {len(failed)} timestamp(s) could not be made secure", failed)
    adjusted = OperatingSeries(series.timestamps, series.load_p_mw, series.load_q_mvar, gp, gq)
    vm, va, p_ext = res.vm.copy(), res.va.copy(), res.p_ext_mw.copy()
    if rows.size:
        sub = adjusted.subset(rows)
        r2, _, v2, _ = _flow(c, sub, cfg.solver, cfg.limits)
        if v2.any() or (r2.status != CONVERGED).any():
            bad = [sub.label(k) for k in np.flatnonzero(v2 | (r2.status != CONVERGED))]
            raise BaseCaseError("base case: adjusted timestamps still insecure", bad)
        vm[rows], va[rows], p_ext[rows] = r2.vm, r2.va, r2.p_ext_mw
    return BaseCase(network, series, adjusted, np.asarray(hist_max_mw, float), p_ext, vm, va,
                    adjustments)


# --------------------------------------------------------------------------
# scenarios

def compute_distribution_summaries(deltas, gen_ids=None, eps: float = ACTIVATION_EPS):
    """Five-number summary plus mean per generator over non-zero activations.

    ``deltas`` is ``{generator: values}`` or a (samples, generators) array.
    Quartiles use linear interpolation between order statistics.
    """
    if isinstance(deltas, dict):
        items = list(deltas.items())
    else:
        arr = np.atleast_2d(np.asarray(deltas, float))
        ids = gen_ids if gen_ids is not None else range(arr.shape[1])
        items = [(g, arr[:, j]) for j, g in enumerate(ids)]
    out = []
    for g, vals in items:
        v = np.asarray(vals, float)
        nz = v[np.abs(v) > eps]
        if not nz.size:
            out.append({"generator": g, "activations": 0, "no_activation": True,
                        "min": None, "q1": None, "median": None, "q3": None, "max": None,
                        "mean": None})
            continue
        q1, med, q3 = np.percentile(nz, [25, 50, 75])
        out.append({"generator": g, "activations": int(nz.size), "no_activation": False,
                    "min": float(nz.min()), "q1": float(q1), "median": float(med),
                    "q3": float(q3), "max": float(nz.max()), "mean": float(nz.mean())})
    return out


@dataclass
class ScenarioResult:
    scenario: Scenario
    labels: list
    bus_ids: np.ndarray
    status: list  # per timestamp: secure / optimal / infeasible / solver-failure / diverged
    reports: list  # ViolationReports of violated timestamps (before redispatch)
    schedules: list  # SetpointSchedules, timestamp order
    p_ext_without: np.ndarray
    p_ext_with: np.ndarray
    vm_min: dict  # stage -> per-bus minimum
    vm_max: dict
    counts: dict
    worst: dict
    cases: dict | None = None  # CAE: element -> cases
    preventive: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def import_rows(self):
        """(timestamp, status, without, with, reduction MWh) per timestamp."""
        for lab, st, a, b in zip(self.labels, self.status, self.p_ext_without, self.p_ext_with):
            yield lab, st, a, b, (a - b) * STEP_H

    def import_energy(self):
        ok = np.isfinite(self.p_ext_without) & np.isfinite(self.p_ext_with)
        without = math.fsum(self.p_ext_without[ok] * STEP_H)
        with_ = math.fsum(self.p_ext_with[ok] * STEP_H)
        red = math.fsum(r[4] for r in self.import_rows if math.isfinite(r[4]))
        return {"without_smfae_mwh": without, "with_smfae_mwh": with_, "reduction_mwh": red}


def _finite_or_none(x):
    return float(x) if x is not None and np.isfinite(x) else None


def run_scenario(scenario: Scenario, base: BaseCase, cfg: RunConfig, jobs: int = 1) -> ScenarioResult:
    net = base.network
    c = compile_network(net)
    series = base.series.scaled_load(scenario.load_scale)
    labels = base.labels
    T = len(series)
    timings = {}

    t0 = time.perf_counter()
    res, br, viol, (over, under, thermal) = _flow(c, series, cfg.solver, cfg.limits)
    conv = res.status == CONVERGED
    reports = assess_rows(labels, c.bus_ids, res.vm, c.branch_refs, br.loading_percent,
                          cfg.limits, rows=np.flatnonzero(viol)) if scenario.rsae else []
    timings["rsae_s"] = time.perf_counter() - t0

    status = np.where(conv, "secure", "diverged").astype(object)
    status[viol] = "violated"
    p_without = np.where(conv, res.p_ext_mw, np.nan)
    p_with = p_without.copy()
    vm_with = np.where(conv[:, None], res.vm, np.nan)

    schedules = []
    if scenario.smfae and scenario.rsae:
        t0 = time.perf_counter()
        rows = np.flatnonzero(viol)
        tasks = [(int(k), series.point(k), "corrective", float(base.p_ext_mw[k]), True,
                  (res.vm[k], res.va[k]), None) for k in rows]
        for k, sched, err in solve_many(net, cfg, base.hist_max_mw, tasks, jobs, scenario.name):
            if sched is None:
                status[k] = SOLVER_FAILURE
                log.error("%s %s: %s", scenario.name, labels[k], err)
                continue
            schedules.append(sched)
            status[k] = sched.status
            if sched.status == OPTIMAL:
                p_with[k] = sched.p_ext_mw
                vm_with[k] = sched.vm_pu
        timings["smfae_s"] = time.perf_counter() - t0

    vm_without = np.where(conv[:, None], res.vm, np.nan)
    stage_min = {"without": _nanreduce(np.nanmin, vm_without), "with": _nanreduce(np.nanmin, vm_with)}
    stage_max = {"without": _nanreduce(np.nanmax, vm_without), "with": _nanreduce(np.nanmax, vm_with)}
    loading = np.where(conv[:, None], br.loading_percent, np.nan)

    counts = {
        "operating_points": T,
        "violated_points": int(viol.sum()),
        "overvoltage_points": int(over.sum()),
        "undervoltage_points": int(under.sum()),
        "thermal_points": int(thermal.sum()),
        "diverged_points": int((~conv).sum()),
        "smfae_optimal": int(sum(1 for s in status if s == OPTIMAL)),
        "smfae_infeasible": int(sum(1 for s in status if s == INFEASIBLE)),
        "smfae_solver_failure": int(sum(1 for s in status if s == SOLVER_FAILURE)),
    }
    worst = {
        "v_max_pu": _finite_or_none(np.nanmax(vm_without)) if conv.any() else None,
        "v_min_pu": _finite_or_none(np.nanmin(vm_without)) if conv.any() else None,
        "loading_max_percent": _finite_or_none(np.nanmax(loading)) if conv.any() and loading.size else None,
    }
    out = ScenarioResult(scenario, labels, c.bus_ids, list(status), reports, schedules,
                         p_without, p_with, stage_min, stage_max, counts, worst, timings=timings)

    if scenario.cae:
        run_cae(out, base, cfg, jobs)
    return out


def _nanreduce(fn, a):
    if not np.isfinite(a).any():
        return np.full(a.shape[1], np.nan)
    return fn(a, axis=0)


def run_cae(result: ScenarioResult, base: BaseCase, cfg: RunConfig, jobs: int = 1):
    """N-1 sweep on the (unscaled) Base Case, then preventive redispatch."""
    t0 = time.perf_counter()
    idx = np.arange(0, len(base.series), cfg.cae_stride)
    sub = base.series.subset(idx)
    cases = cae.sweep(base.network, sub, cfg.limits, cfg.solver, jobs=jobs)
    result.cases = cases
    result.timings["cae_s"] = time.perf_counter() - t0
    if not (cfg.preventive and result.scenario.smfae):
        return
    t0 = time.perf_counter()
    tasks = []
    for element, cs in cases.items():
        for j, case in enumerate(cs):
            if case.outcome == cae.VIOLATIONS:
                k = int(idx[j])
                tasks.append(((element, k), base.series.point(k), f"preventive:{element}",
                              float(base.p_ext_mw[k]), True, None, element))
    out = solve_many(base.network, cfg, base.hist_max_mw, tasks, jobs, "preventive")
    result.preventive = [s for _, s, _ in out if s is not None]
    result.timings["preventive_s"] = time.perf_counter() - t0


# --------------------------------------------------------------------------
# metrics and artifacts

def _schedule_deltas(schedules, attr):
    """{generator id: [delta per optimal schedule]} in schedule order."""
    out = {}
    for s in schedules:
        if s.status != OPTIMAL:
            continue
        for g, d in zip(s.gen_ids, getattr(s, attr)):
            out.setdefault(int(g), []).append(float(d))
    return out


def scenario_metrics(r: ScenarioResult) -> dict:
    n = r.counts["operating_points"]
    m = {
        "name": r.scenario.name,
        "load_scale": r.scenario.load_scale,
        **r.counts,
        "violation_rate_percent": 100.0 * r.counts["violated_points"] / n if n else 0.0,
        "overvoltage_rate_percent": 100.0 * r.counts["overvoltage_points"] / n if n else 0.0,
        "undervoltage_rate_percent": 100.0 * r.counts["undervoltage_points"] / n if n else 0.0,
        "thermal_rate_percent": 100.0 * r.counts["thermal_points"] / n if n else 0.0,
        "worst": r.worst,
        "import_energy": r.import_energy(),
        "delta_p_mw": compute_distribution_summaries(_schedule_deltas(r.schedules, "dp_mw")),
        "delta_q_mvar": compute_distribution_summaries(_schedule_deltas(r.schedules, "dq_mvar")),
    }
    ver = [s.verification for s in r.schedules if s.status == OPTIMAL and s.verification]
    m["verification"] = {
        "checked": len(ver),
        "post_flow_violations": int(sum(v.violations for v in ver)),
        "max_slack_deviation_pu": max((v.slack_deviation_pu for v in ver), default=0.0),
    }
    if r.cases is not None:
        allc = [c for cs in r.cases.values() for c in cs]
        by = {k: sum(1 for c in allc if c.outcome == k) for k in cae.OUTCOMES}
        ok = [c for c in allc if c.outcome in (cae.SECURE, cae.VIOLATIONS)]
        m["cae"] = {
            "elements": len(r.cases),
            "cases": len(allc),
            "outcomes": by,
            "insecure_rate_percent": 100.0 * (len(allc) - by[cae.SECURE]) / len(allc) if allc else 0.0,
            "violation_rate_percent": 100.0 * by[cae.VIOLATIONS] / len(allc) if allc else 0.0,
            "worst_v_max_pu": max((c.v_max_pu for c in ok), default=None),
            "worst_v_min_pu": min((c.v_min_pu for c in ok), default=None),
            "worst_loading_percent": max((c.max_loading_percent for c in ok), default=None),
            "preventive": {
                "solved": len(r.preventive),
                "optimal": sum(1 for s in r.preventive if s.status == OPTIMAL),
                "infeasible": sum(1 for s in r.preventive if s.status == INFEASIBLE),
                "solver_failure": sum(1 for s in r.preventive if s.status == SOLVER_FAILURE),
            },
        }
    return m


def _clean(obj):
    """JSON-safe copy: NaN/inf become null, numpy scalars become Python numbers."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_run(outdir, base: BaseCase, results: list, cfg: RunConfig, timings: dict,
              extra: dict | None = None) -> Path:
    """Write every run artifact; ``metrics.json`` carries no wall-clock data."""
    out = Path(outdir)
    (out / "setpoints").mkdir(parents=True, exist_ok=True)
    metrics = {
        "network": base.network.name,
        "operating_points": len(base.series),
        "first_timestamp": base.labels[0] if len(base.series) else None,
        "last_timestamp": base.labels[-1] if len(base.series) else None,
        "config": cfg.to_dict(),
        "base_case": {"adjusted_timestamps": len(base.adjustments),
                      "import_energy_mwh": math.fsum(base.p_ext_mw * STEP_H)},
        "scenarios": [scenario_metrics(r) for r in results],
        **(extra or {}),
    }
    (out / "metrics.json").write_text(json.dumps(_clean(metrics), indent=1, sort_keys=True) + "\n")
    (out / "timings.json").write_text(json.dumps(_clean(timings), indent=1, sort_keys=True) + "\n")

    with open(out / "violations.jsonl", "w", encoding="utf-8") as fh:
        for r in results:
            for rep in r.reports:
                fh.write(json.dumps({"scenario": r.scenario.name, **rep.to_dict()}, sort_keys=True))
                fh.write("\n")

    with open(out / "contingencies.jsonl", "w", encoding="utf-8") as fh, \
            open(out / "contingency_summary.csv", "w", encoding="utf-8", newline="") as sfh:
        wrote_header = False
        for r in results:
            if r.cases is None:
                continue
            for cs in r.cases.values():
                for case in cs:
                    if not case.secure:
                        fh.write(json.dumps({"scenario": r.scenario.name, **case.to_dict()},
                                            sort_keys=True))
                        fh.write("\n")
            if not wrote_header:
                cae.write_summary_csv(cae.summarize(r.cases), sfh)
                wrote_header = True

    with open(out / "base_case_adjustments.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("timestamp", "objective", "iterations", "max_abs_dp_mw", "max_abs_dq_mvar"))
        for s in base.adjustments:
            w.writerow((s.timestamp, repr(s.objective), s.iterations,
                        repr(float(np.abs(s.dp_mw).max(initial=0))),
                        repr(float(np.abs(s.dq_mvar).max(initial=0)))))

    for r in results:
        doc = {"scenario": r.scenario.name, "corrective": [s.to_dict() for s in r.schedules],
               "preventive": [s.to_dict() for s in r.preventive]}
        (out / "setpoints" / f"{r.scenario.name}.json").write_text(
            json.dumps(_clean(doc), sort_keys=True) + "\n")

    with open(out / "deltas.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("scenario", "timestamp", "mode", "generator", "dp_mw", "dq_mvar"))
        for r in results:
            for s in list(r.schedules) + list(r.preventive):
                if s.status != OPTIMAL:
                    continue
                for g, dp, dq in zip(s.gen_ids, s.dp_mw, s.dq_mvar):
                    w.writerow((r.scenario.name, s.timestamp, s.mode, int(g),
                                repr(float(dp)), repr(float(dq))))

    with open(out / "import_comparison.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("scenario", "timestamp", "status", "p_ext_without_mw", "p_ext_with_mw",
                    "reduction_mwh"))
        for r in results:
            for lab, st, a, b, red in r.import_rows:
                w.writerow((r.scenario.name, lab, st, repr(float(a)), repr(float(b)), repr(float(red))))

    with open(out / "bus_voltage_extremes.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("scenario", "stage", "bus", "min_v", "max_v"))
        for r in results:
            for stage in ("without", "with"):
                for b, lo, hi in zip(r.bus_ids, r.vm_min[stage], r.vm_max[stage]):
                    w.writerow((r.scenario.name, stage, int(b), repr(float(lo)), repr(float(hi))))

    (out / "summary.md").write_text(render_summary(metrics))
    return out


def render_summary(metrics: dict) -> str:
    lines = [f"# Run summary: {metrics['network']}", "",
             f"Operating points: {metrics['operating_points']} "
             f"({metrics['first_timestamp']} to {metrics['last_timestamp']})", "",
             f"Base Case: {metrics['base_case']['adjusted_timestamps']} timestamp(s) adjusted.", "",
             "| scenario | load scale | violated % | over % | under % | thermal % | SMFAE optimal "
             "| infeasible | failure | import reduction (MWh) |",
             "|---|---|---|---|---|---|---|---|---|---|"]
    for s in metrics["scenarios"]:
        lines.append(
            f"| {s['name']} | {s['load_scale']:g} | {s['violation_rate_percent']:.3f} "
            f"| {s['overvoltage_rate_percent']:.3f} | {s['undervoltage_rate_percent']:.3f} "
            f"| {s['thermal_rate_percent']:.3f} | {s['smfae_optimal']} | {s['smfae_infeasible']} "
            f"| {s['smfae_solver_failure']} | {s['import_energy']['reduction_mwh']:.3f} |")
    for s in metrics["scenarios"]:
        c = s.get("cae")
        if c:
            o = c["outcomes"]
            lines += ["", f"## Contingency assessment ({s['name']})", "",
                      f"{c['elements']} outages x {c['cases'] // max(c['elements'], 1)} timestamps: "
                      f"{o['secure']} secure, {o['violations']} with violations, "
                      f"{o['diverged']} diverged, {o['degenerate-topology']} degenerate "
                      f"({c['insecure_rate_percent']:.3f}% insecure).",
                      f"Preventive redispatch: {c['preventive']['optimal']} optimal, "
                      f"{c['preventive']['infeasible']} infeasible, "
                      f"{c['preventive']['solver_failure']} solver failures."]
    return "\n".join(lines) + "\n"


def run(cfg: RunConfig, jobs: int | None = None) -> tuple[Path, dict]:
    """Full pipeline from config: ingest, Base Case, every scenario, artifacts."""
    jobs = jobs or cfg.jobs
    timings = {}
    t0 = time.perf_counter()
    net, series, hist, gaps = load_inputs(cfg)
    timings["ingest_s"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    base = build_base_case(net, series, hist, cfg, jobs)
    timings["base_case_s"] = time.perf_counter() - t0
    results = []
    for sc in cfg.scenarios:
        t0 = time.perf_counter()
        r = run_scenario(sc, base, cfg, jobs)
        r.timings["total_s"] = time.perf_counter() - t0
        timings[sc.name] = r.timings
        results.append(r)
        log.info("scenario %s: %d/%d violated, %d optimal", sc.name, r.counts["violated_points"],
                 r.counts["operating_points"], r.counts["smfae_optimal"])
    out = write_run(cfg.out, base, results, cfg, timings, {"measurement_gaps": gaps})
    return out, timings
