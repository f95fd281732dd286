"""Real-time security assessment: voltage band and thermal loading checks."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

OVERVOLTAGE = "overvoltage"
UNDERVOLTAGE = "undervoltage"
THERMAL = "thermal"
_KIND_ORDER = {OVERVOLTAGE: 0, UNDERVOLTAGE: 1, THERMAL: 2}
_ELEMENT_ORDER = {"bus": 0, "line": 1, "trafo": 2}


@dataclass(frozen=True)
class SecurityLimits:
    v_min_pu: float = 0.95
    v_max_pu: float = 1.05
    loading_max_percent: float = 90.0

    def __post_init__(self):
        if not 0 < self.v_min_pu < self.v_max_pu:
            raise ValueError("need 0 < v_min_pu < v_max_pu")
        if not 0 < self.loading_max_percent <= 100:
            raise ValueError("loading_max_percent must lie in (0, 100]")


@dataclass(frozen=True)
class Violation:
    kind: str
    element: str
    value: float
    limit: float

    def sort_key(self):
        etype, _, eid = self.element.partition(":")
        return (_KIND_ORDER[self.kind], _ELEMENT_ORDER.get(etype, 9), int(eid))

    def to_dict(self):
        return {"kind": self.kind, "element": self.element, "value": self.value, "limit": self.limit}


@dataclass(frozen=True)
class ViolationReport:
    timestamp: str
    context: str = "normal"  # "normal" or "contingency:<element>"
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def secure(self):
        return not self.violations

    def count(self, kind=None):
        return sum(1 for v in self.violations if kind is None or v.kind == kind)

    def to_dict(self):
        return {"timestamp": self.timestamp, "context": self.context,
                "violations": [v.to_dict() for v in self.violations]}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def summary(self):
        if self.secure:
            return f"{self.timestamp} [{self.context}] secure"
        parts = ", ".join(f"{v.kind} {v.element}={v.value:.5f} (limit {v.limit:g})"
                          for v in self.violations)
        return f"{self.timestamp} [{self.context}] {len(self.violations)} violation(s): {parts}"


def _collect(bus_ids, vm, branch_refs, loading, limits):
    out = []
    for b, v in zip(bus_ids, vm):
        if v > limits.v_max_pu:
            out.append(Violation(OVERVOLTAGE, f"bus:{int(b)}", float(v), limits.v_max_pu))
        elif v < limits.v_min_pu:
            out.append(Violation(UNDERVOLTAGE, f"bus:{int(b)}", float(v), limits.v_min_pu))
    for r, lp in zip(branch_refs, loading):
        if lp > limits.loading_max_percent:
            out.append(Violation(THERMAL, str(r), float(lp), limits.loading_max_percent))
    out.sort(key=Violation.sort_key)
    return tuple(out)


def assess(solution, limits: SecurityLimits | None = None, context: str = "normal") -> ViolationReport:
    """Compare a converged power flow against the security limits.

    Limits are inclusive: a bus at exactly ``v_max_pu`` or a branch at exactly
    ``loading_max_percent`` is secure.
    """
    limits = limits or SecurityLimits()
    return ViolationReport(
        solution.timestamp, context,
        _collect(solution.bus_ids, solution.vm_pu, solution.branches.refs,
                 solution.branches.loading_percent, limits))


def violation_mask(vm, loading, limits: SecurityLimits):
    """Per-row flags (any, over, under, thermal) for batched results."""
    vm = np.atleast_2d(vm)
    loading = np.atleast_2d(loading)
    over = (vm > limits.v_max_pu).any(axis=1)
    under = (vm < limits.v_min_pu).any(axis=1)
    if loading.shape[1]:
        thermal = (loading > limits.loading_max_percent).any(axis=1)
    else:
        thermal = np.zeros(vm.shape[0], dtype=bool)
    return over | under | thermal, over, under, thermal


def assess_rows(timestamps, bus_ids, vm, branch_refs, loading, limits: SecurityLimits,
                context="normal", rows=None):
    """ViolationReports for selected rows of a batch (default: violated rows)."""
    if rows is None:
        rows = np.flatnonzero(violation_mask(vm, loading, limits)[0])
    return [ViolationReport(timestamps[k], context,
                            _collect(bus_ids, vm[k], branch_refs, loading[k], limits))
            for k in rows]


def write_jsonl(reports, fh):
    for rep in reports:
        fh.write(rep.to_json())
        fh.write("\n")
