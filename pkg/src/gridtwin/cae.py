"""Contingency assessment: N-1 line and transformer outages.

Each case applies one outage, drops whatever it islands, re-solves the power
flow and checks the result against the same limits as the real-time
assessment. Failures are encoded in the case outcome, so a sweep never aborts.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .network import BranchRef, DegenerateTopologyError, Network, apply_outage, compile_network
from .powerflow import (
    CONVERGED,
    OperatingPoint,
    OperatingSeries,
    SolverOptions,
    compute_branch_results,
    solve_batch,
)
from .rsae import SecurityLimits, ViolationReport, _collect

log = logging.getLogger(__name__)

SECURE = "secure"
VIOLATIONS = "violations"
DIVERGED = "diverged"
DEGENERATE = "degenerate-topology"
OUTCOMES = (SECURE, VIOLATIONS, DIVERGED, DEGENERATE)


@dataclass(frozen=True)
class ContingencyCase:
    timestamp: str
    element: str
    islanded_buses: tuple[int, ...]
    outcome: str
    report: ViolationReport | None = None
    message: str = ""
    v_max_pu: float = float("nan")
    v_min_pu: float = float("nan")
    max_loading_percent: float = float("nan")
    iterations: int = 0
    p_ext_mw: float = float("nan")

    @property
    def secure(self):
        return self.outcome == SECURE

    def to_dict(self):
        def num(x):
            return None if x != x else float(x)
        return {
            "timestamp": self.timestamp,
            "element": self.element,
            "outcome": self.outcome,
            "islanded_buses": list(self.islanded_buses),
            "violations": [v.to_dict() for v in self.report.violations] if self.report else [],
            "v_max_pu": num(self.v_max_pu),
            "v_min_pu": num(self.v_min_pu),
            "max_loading_percent": num(self.max_loading_percent),
            "iterations": self.iterations,
            "message": self.message,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def enumerate_contingencies(network: Network) -> list[BranchRef]:
    """One case per in-service line, then per in-service transformer, by id."""
    return list(network.branch_refs(in_service_only=True))


@dataclass
class OutageTopology:
    """An outage applied once, reusable across every timestamp."""

    element: BranchRef
    network: Network | None
    islanded: frozenset
    compiled: object = None
    error: str = ""

    @property
    def degenerate(self):
        return self.network is None


def prepare_outage(network: Network, element) -> OutageTopology:
    ref = BranchRef.parse(element)
    try:
        net, islanded = apply_outage(network, ref)
    except DegenerateTopologyError as exc:
        others = frozenset(b.id for b in network.buses if b.in_service and b.id != network.ext_grid.bus)
        return OutageTopology(ref, None, others, None, str(exc))
    return OutageTopology(ref, net, islanded, compile_network(net))


def _cases_from_batch(topo: OutageTopology, labels, res, limits):
    c = topo.compiled
    isl = tuple(sorted(topo.islanded))
    ctx = f"contingency:{topo.element}"
    out = []
    br = compute_branch_results(c, res.vm, res.va)
    for k, stamp in enumerate(labels):
        if res.status[k] != CONVERGED:
            out.append(ContingencyCase(
                stamp, str(topo.element), isl, DIVERGED,
                message=f"power flow did not converge (max mismatch {res.max_mismatch[k]:.3e} p.u., "
                        f"{res.iterations[k]} iterations)",
                iterations=int(res.iterations[k])))
            continue
        vm = res.vm[k]
        load = br.loading_percent[k]
        viol = _collect(c.bus_ids, vm, c.branch_refs, load, limits)
        out.append(ContingencyCase(
            stamp, str(topo.element), isl, VIOLATIONS if viol else SECURE,
            ViolationReport(stamp, ctx, viol) if viol else None,
            v_max_pu=float(vm.max()), v_min_pu=float(vm.min()),
            max_loading_percent=float(load.max(initial=0.0)),
            iterations=int(res.iterations[k]), p_ext_mw=float(res.p_ext_mw[k])))
    return out


def evaluate_outage(topo: OutageTopology, series: OperatingSeries, limits: SecurityLimits,
                    options: SolverOptions | None = None) -> list[ContingencyCase]:
    """All timestamps of ``series`` under one outage, in timestamp order."""
    labels = [series.label(k) for k in range(len(series))]
    if topo.degenerate:
        isl = tuple(sorted(topo.islanded))
        return [ContingencyCase(s, str(topo.element), isl, DEGENERATE, message=topo.error)
                for s in labels]
    # islanded units are out of service in the compiled topology, so their
    # columns simply drop out of the injection sums
    res = solve_batch(topo.compiled, series.load_p_mw, series.load_q_mvar,
                      series.gen_p_mw, series.gen_q_mvar, options)
    return _cases_from_batch(topo, labels, res, limits)


def assess_contingency(network: Network, point: OperatingPoint, element,
                       limits: SecurityLimits | None = None,
                       options: SolverOptions | None = None) -> ContingencyCase:
    """Outage -> prune islands -> power flow -> assess, for a single point."""
    limits = limits or SecurityLimits()
    point.check(network)
    topo = prepare_outage(network, element)
    series = OperatingSeries(np.array([0], dtype="datetime64[s]"),
                             point.load_p_mw[None], point.load_q_mvar[None],
                             point.gen_p_mw[None], point.gen_q_mvar[None])
    case = evaluate_outage(topo, series, limits, options)[0]
    return _relabel(case, point.timestamp)


def _relabel(case: ContingencyCase, stamp: str) -> ContingencyCase:
    rep = case.report
    if rep is not None:
        rep = ViolationReport(stamp, rep.context, rep.violations)
    d = dict(case.__dict__, timestamp=stamp, report=rep)
    return ContingencyCase(**d)


def sweep(network: Network, series: OperatingSeries, limits: SecurityLimits | None = None,
          options: SolverOptions | None = None, jobs: int = 1, elements=None):
    """N-1 sweep over every timestamp of ``series``.

    Returns ``{element string: [ContingencyCase per timestamp]}`` in
    enumeration order. Outages are evaluated concurrently when ``jobs > 1``;
    the merge order never depends on scheduling.
    """
    limits = limits or SecurityLimits()
    refs = [BranchRef.parse(e) for e in elements] if elements is not None \
        else enumerate_contingencies(network)

    def work(ref):
        return evaluate_outage(prepare_outage(network, ref), series, limits, options)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, refs))
    else:
        results = [work(r) for r in refs]
    return {str(r): cases for r, cases in zip(refs, results)}


def sweep_point(network: Network, point: OperatingPoint, limits: SecurityLimits | None = None,
                options: SolverOptions | None = None, jobs: int = 1) -> list[ContingencyCase]:
    """Single-timestamp sweep; one case per enumerated element."""
    point.check(network)
    series = OperatingSeries(np.array([0], dtype="datetime64[s]"),
                             point.load_p_mw[None], point.load_q_mvar[None],
                             point.gen_p_mw[None], point.gen_q_mvar[None])
    res = sweep(network, series, limits, options, jobs)
    return [_relabel(cases[0], point.timestamp) for cases in res.values()]


# --------------------------------------------------------------------------
# output

def write_jsonl(cases, fh, only_insecure: bool = False):
    for case in cases:
        if only_insecure and case.secure:
            continue
        fh.write(case.to_json())
        fh.write("\n")


@dataclass
class ElementSummary:
    element: str
    cases: int = 0
    counts: dict = field(default_factory=lambda: {k: 0 for k in OUTCOMES})
    v_max_pu: float = float("nan")
    v_min_pu: float = float("nan")
    max_loading_percent: float = float("nan")
    islanded: int = 0

    @property
    def outcome(self):
        """Worst outcome seen: degenerate > diverged > violations > secure."""
        for k in (DEGENERATE, DIVERGED, VIOLATIONS):
            if self.counts[k]:
                return k
        return SECURE


def summarize(cases_by_element) -> list[ElementSummary]:
    out = []
    for element, cases in cases_by_element.items():
        s = ElementSummary(element, len(cases))
        vmax, vmin, load = [], [], []
        for case in cases:
            s.counts[case.outcome] += 1
            s.islanded = max(s.islanded, len(case.islanded_buses))
            if case.outcome in (SECURE, VIOLATIONS):
                vmax.append(case.v_max_pu)
                vmin.append(case.v_min_pu)
                load.append(case.max_loading_percent)
        if vmax:
            s.v_max_pu, s.v_min_pu, s.max_loading_percent = max(vmax), min(vmin), max(load)
        out.append(s)
    return out


def write_summary_csv(summaries, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("element", "outcome", "cases", "secure", "violations", "diverged",
                "degenerate", "worst_v_max_pu", "worst_v_min_pu", "worst_loading_percent",
                "islanded_count"))
    for s in summaries:
        w.writerow((s.element, s.outcome, s.cases, s.counts[SECURE], s.counts[VIOLATIONS],
                    s.counts[DIVERGED], s.counts[DEGENERATE], _fmt(s.v_max_pu), _fmt(s.v_min_pu),
                    _fmt(s.max_loading_percent), s.islanded))


def _fmt(x):
    return "" if x != x else f"{x:.6f}"
