"""Static grid model: element records, JSON loading, admittance matrix, outages.

All electrical quantities are stored in engineering units (kV, ohm/km, nF/km,
km, kA, MVA, %, MW, MVAr) exactly as they appear in the network document.
Per-unit conversion happens in :func:`compile_network` and
:func:`build_admittance`; the system base is ``Network.s_base_mva`` and each
bus uses its own ``vn_kv`` as voltage base.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from pathlib import Path
from typing import NamedTuple

import jsonschema
import numpy as np


class NetworkError(ValueError):
    """Invalid network document or inconsistent network data."""


class DegenerateTopologyError(NetworkError):
    """Nothing but the slack bus remains energised."""


SLACK = "slack"
PQ = "pq"


@dataclass(frozen=True)
class Bus:
    id: int
    name: str
    vn_kv: float
    kind: str = PQ
    in_service: bool = True


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    r_ohm_per_km: float
    x_ohm_per_km: float
    c_nf_per_km: float
    length_km: float
    max_i_ka: float
    in_service: bool = True


@dataclass(frozen=True)
class Transformer:
    id: int
    hv_bus: int
    lv_bus: int
    sn_mva: float
    vk_percent: float
    vkr_percent: float
    vn_hv_kv: float
    vn_lv_kv: float
    in_service: bool = True


@dataclass(frozen=True)
class Shunt:
    """Constant-impedance shunt; ``q_mvar`` > 0 is inductive consumption at 1 p.u."""

    id: int
    bus: int
    q_mvar: float
    p_mw: float = 0.0
    in_service: bool = True


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p_hist_max_mw: float
    in_service: bool = True


@dataclass(frozen=True)
class Load:
    id: int
    bus: int
    in_service: bool = True


@dataclass(frozen=True)
class ExternalGrid:
    bus: int
    vm_pu: float = 1.0


class BranchRef(NamedTuple):
    """Reference to a line or transformer, printed as ``line:3`` / ``trafo:7``."""

    kind: str
    id: int

    def __str__(self):
        return f"{self.kind}:{self.id}"

    @classmethod
    def parse(cls, text):
        if isinstance(text, BranchRef):
            return text
        kind, sep, ident = str(text).partition(":")
        if not sep or kind not in ("line", "trafo"):
            raise NetworkError(f"bad branch reference {text!r}; expected line:<id> or trafo:<id>")
        try:
            return cls(kind, int(ident))
        except ValueError:
            raise NetworkError(f"bad branch reference {text!r}; id must be an integer") from None


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    transformers: tuple[Transformer, ...]
    shunts: tuple[Shunt, ...]
    generators: tuple[Generator, ...]
    loads: tuple[Load, ...]
    ext_grid: ExternalGrid
    s_base_mva: float = 100.0
    f_hz: float = 50.0
    name: str = ""

    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.buses)}

    @cached_property
    def bus_by_name(self) -> dict[str, Bus]:
        return {b.name: b for b in self.buses}

    @property
    def slack_bus(self) -> Bus:
        return self.buses[self.bus_index[self.ext_grid.bus]]

    def branch_refs(self, in_service_only=True) -> list[BranchRef]:
        refs = [BranchRef("line", ln.id) for ln in sorted(self.lines, key=lambda e: e.id)
                if ln.in_service or not in_service_only]
        refs += [BranchRef("trafo", tr.id) for tr in sorted(self.transformers, key=lambda e: e.id)
                 if tr.in_service or not in_service_only]
        return refs

    def branch(self, ref):
        ref = BranchRef.parse(ref)
        pool = self.lines if ref.kind == "line" else self.transformers
        for el in pool:
            if el.id == ref.id:
                return el
        raise NetworkError(f"unknown branch {ref}")

    def to_dict(self) -> dict:
        def rec(el):
            return {k: getattr(el, k) for k in el.__dataclass_fields__}

        return {
            "name": self.name,
            "s_base_mva": self.s_base_mva,
            "f_hz": self.f_hz,
            "buses": [rec(b) for b in self.buses],
            "lines": [rec(x) for x in self.lines],
            "transformers": [rec(x) for x in self.transformers],
            "shunts": [rec(x) for x in self.shunts],
            "generators": [rec(x) for x in self.generators],
            "loads": [rec(x) for x in self.loads],
            "ext_grid": rec(self.ext_grid),
        }


# ---------------------------------------------------------------------------
# loading and validation

_NUM = {"type": "number"}
_INT = {"type": "integer"}
_BOOL = {"type": "boolean"}


def _obj(required, optional=()):
    props = dict(required)
    props.update(dict(optional))
    return {
        "type": "object",
        "properties": props,
        "required": [k for k, _ in required],
    }


NETWORK_SCHEMA = {
    "type": "object",
    "required": ["buses", "lines", "transformers", "shunts", "generators", "loads", "ext_grid"],
    "properties": {
        "name": {"type": "string"},
        "s_base_mva": _NUM,
        "f_hz": _NUM,
        "buses": {"type": "array", "items": _obj(
            [("id", _INT), ("name", {"type": "string"}), ("vn_kv", _NUM),
             ("kind", {"enum": [SLACK, PQ]})],
            [("in_service", _BOOL)])},
        "lines": {"type": "array", "items": _obj(
            [("id", _INT), ("from_bus", _INT), ("to_bus", _INT), ("r_ohm_per_km", _NUM),
             ("x_ohm_per_km", _NUM), ("c_nf_per_km", _NUM), ("length_km", _NUM),
             ("max_i_ka", _NUM)],
            [("in_service", _BOOL)])},
        "transformers": {"type": "array", "items": _obj(
            [("id", _INT), ("hv_bus", _INT), ("lv_bus", _INT), ("sn_mva", _NUM),
             ("vk_percent", _NUM), ("vkr_percent", _NUM), ("vn_hv_kv", _NUM),
             ("vn_lv_kv", _NUM)],
            [("in_service", _BOOL)])},
        "shunts": {"type": "array", "items": _obj(
            [("id", _INT), ("bus", _INT), ("q_mvar", _NUM)],
            [("p_mw", _NUM), ("in_service", _BOOL)])},
        "generators": {"type": "array", "items": _obj(
            [("id", _INT), ("bus", _INT), ("p_hist_max_mw", _NUM)],
            [("in_service", _BOOL)])},
        "loads": {"type": "array", "items": _obj(
            [("id", _INT), ("bus", _INT)], [("in_service", _BOOL)])},
        "ext_grid": _obj([("bus", _INT)], [("vm_pu", _NUM)]),
    },
}


def _build(cls, records):
    names = set(cls.__dataclass_fields__)
    return tuple(cls(**{k: v for k, v in rec.items() if k in names}) for rec in records)


@lru_cache(maxsize=1)
def _schema_validator():
    cls = jsonschema.validators.validator_for(NETWORK_SCHEMA)
    cls.check_schema(NETWORK_SCHEMA)
    return cls(NETWORK_SCHEMA)


def network_from_dict(doc: dict) -> Network:
    """Validate ``doc`` against the schema and the model invariants."""
    try:
        err = jsonschema.exceptions.best_match(_schema_validator().iter_errors(doc))
        if err is not None:
            raise err
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise NetworkError(f"schema violation at {where}: {exc.message}") from None

    net = Network(
        buses=_build(Bus, doc["buses"]),
        lines=_build(Line, doc["lines"]),
        transformers=_build(Transformer, doc["transformers"]),
        shunts=_build(Shunt, doc["shunts"]),
        generators=_build(Generator, doc["generators"]),
        loads=_build(Load, doc["loads"]),
        ext_grid=ExternalGrid(**doc["ext_grid"]),
        s_base_mva=float(doc.get("s_base_mva", 100.0)),
        f_hz=float(doc.get("f_hz", 50.0)),
        name=doc.get("name", ""),
    )
    validate_network(net)
    return net


def load_network(source) -> Network:
    """Load a network from a JSON path, JSON text or already-parsed dict."""
    if isinstance(source, dict):
        return network_from_dict(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise NetworkError(f"cannot read network document: {exc}") from None
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"network document is not valid JSON: {exc}") from None
    return network_from_dict(doc)


def _unique(kind, items):
    seen = set()
    for el in items:
        if el.id in seen:
            raise NetworkError(f"duplicate {kind} id {el.id}")
        seen.add(el.id)


def validate_network(net: Network) -> None:
    for kind, items in (("bus", net.buses), ("line", net.lines), ("transformer", net.transformers),
                        ("shunt", net.shunts), ("generator", net.generators), ("load", net.loads)):
        _unique(kind, items)

    ids = net.bus_index
    for b in net.buses:
        if not b.vn_kv > 0:
            raise NetworkError(f"bus {b.id}: vn_kv must be positive")

    def ref(owner, bus):
        if bus not in ids:
            raise NetworkError(f"dangling reference: {owner} points at missing bus {bus}")

    for ln in net.lines:
        ref(f"line {ln.id}", ln.from_bus)
        ref(f"line {ln.id}", ln.to_bus)
        if ln.from_bus == ln.to_bus:
            raise NetworkError(f"line {ln.id}: from_bus equals to_bus")
        if not ln.length_km > 0 or not ln.max_i_ka > 0:
            raise NetworkError(f"line {ln.id}: length_km and max_i_ka must be positive")
        if ln.x_ohm_per_km < 0 or ln.r_ohm_per_km < 0 or ln.c_nf_per_km < 0:
            raise NetworkError(f"line {ln.id}: negative impedance parameter")
        if ln.r_ohm_per_km == 0 and ln.x_ohm_per_km == 0:
            raise NetworkError(f"line {ln.id}: zero series impedance")
        va, vb = net.buses[ids[ln.from_bus]].vn_kv, net.buses[ids[ln.to_bus]].vn_kv
        if not math.isclose(va, vb, rel_tol=1e-9):
            raise NetworkError(f"line {ln.id}: connects buses of different nominal voltage")
    for tr in net.transformers:
        ref(f"transformer {tr.id}", tr.hv_bus)
        ref(f"transformer {tr.id}", tr.lv_bus)
        if tr.hv_bus == tr.lv_bus:
            raise NetworkError(f"transformer {tr.id}: hv_bus equals lv_bus")
        if not tr.sn_mva > 0 or not tr.vn_hv_kv > 0 or not tr.vn_lv_kv > 0:
            raise NetworkError(f"transformer {tr.id}: ratings must be positive")
        if not 0 < tr.vkr_percent <= tr.vk_percent:
            raise NetworkError(f"transformer {tr.id}: need 0 < vkr_percent <= vk_percent")
    for sh in net.shunts:
        ref(f"shunt {sh.id}", sh.bus)
    for g in net.generators:
        ref(f"generator {g.id}", g.bus)
        if g.p_hist_max_mw < 0:
            raise NetworkError(f"generator {g.id}: p_hist_max_mw must be non-negative")
    for ld in net.loads:
        ref(f"load {ld.id}", ld.bus)

    slacks = [b for b in net.buses if b.kind == SLACK]
    if len(slacks) != 1:
        raise NetworkError(f"expected exactly one slack bus, found {len(slacks)}")
    ref("ext_grid", net.ext_grid.bus)
    if net.ext_grid.bus != slacks[0].id:
        raise NetworkError("ext_grid must reference the slack bus")
    if not 0.9 <= net.ext_grid.vm_pu <= 1.1:
        raise NetworkError("ext_grid vm_pu outside [0.9, 1.1]")
    if not net.s_base_mva > 0 or not net.f_hz > 0:
        raise NetworkError("s_base_mva and f_hz must be positive")

    reach = _reachable(net)
    stranded = [b.id for b in net.buses if b.in_service and b.id not in reach]
    if stranded:
        raise NetworkError(f"in-service buses not connected to the slack: {sorted(stranded)}")


# ---------------------------------------------------------------------------
# topology

def _in_service_edges(net: Network):
    for ln in net.lines:
        if ln.in_service:
            yield ln.from_bus, ln.to_bus
    for tr in net.transformers:
        if tr.in_service:
            yield tr.hv_bus, tr.lv_bus


def _reachable(net: Network) -> set[int]:
    live = {b.id for b in net.buses if b.in_service}
    adj: dict[int, list[int]] = {b: [] for b in live}
    for a, b in _in_service_edges(net):
        if a in live and b in live:
            adj[a].append(b)
            adj[b].append(a)
    start = net.ext_grid.bus
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def apply_outage(net: Network, element) -> tuple[Network, frozenset[int]]:
    """Take ``element`` out of service and de-energise whatever it islands.

    Returns a modified copy plus the set of bus ids no longer reachable from
    the slack. Generators, loads, shunts and branches at those buses are
    switched off. Raises :class:`DegenerateTopologyError` when only the slack
    bus would remain.
    """
    ref = BranchRef.parse(element)
    net.branch(ref)  # raises for unknown ids
    if ref.kind == "line":
        lines = tuple(replace(x, in_service=False) if x.id == ref.id else x for x in net.lines)
        out = replace(net, lines=lines)
    else:
        trafos = tuple(replace(x, in_service=False) if x.id == ref.id else x
                       for x in net.transformers)
        out = replace(net, transformers=trafos)

    reach = _reachable(out)
    islanded = frozenset(b.id for b in out.buses if b.id not in reach)
    if not islanded:
        return out, islanded

    dead = islanded
    out = replace(
        out,
        buses=tuple(replace(b, in_service=False) if b.id in dead and b.in_service else b
                    for b in out.buses),
        lines=tuple(replace(x, in_service=False)
                    if x.in_service and (x.from_bus in dead or x.to_bus in dead) else x
                    for x in out.lines),
        transformers=tuple(replace(x, in_service=False)
                           if x.in_service and (x.hv_bus in dead or x.lv_bus in dead) else x
                           for x in out.transformers),
        shunts=tuple(replace(x, in_service=False) if x.in_service and x.bus in dead else x
                     for x in out.shunts),
        generators=tuple(replace(x, in_service=False) if x.in_service and x.bus in dead else x
                         for x in out.generators),
        loads=tuple(replace(x, in_service=False) if x.in_service and x.bus in dead else x
                    for x in out.loads),
    )
    if not any(b.in_service for b in out.buses if b.id != out.ext_grid.bus):
        raise DegenerateTopologyError(
            f"degenerate case: empty network after outage of {ref} (all non-slack buses islanded)")
    return out, islanded


# ---------------------------------------------------------------------------
# per-unit model

@dataclass(frozen=True)
class AdmittanceMatrix:
    """Bus admittance matrix over the in-service buses, in p.u."""

    bus_ids: tuple[int, ...]
    Y: np.ndarray
    branch_refs: tuple[BranchRef, ...]
    series_abs: np.ndarray  # |y_series| per branch, p.u.

    @property
    def G(self):
        return self.Y.real

    @property
    def B(self):
        return self.Y.imag


@dataclass(frozen=True, eq=False)
class CompiledNetwork:
    """Index-based arrays for the in-service part of a network.

    Positions refer to the compacted in-service bus list ``bus_ids``; element
    index arrays (``gen_idx``, ``load_idx``) point back into the full
    ``Network.generators`` / ``Network.loads`` tuples so operating-point
    vectors can stay aligned with the document order.
    """

    network: Network
    bus_ids: np.ndarray
    vn_kv: np.ndarray
    slack: int
    vm_slack: float
    pq: np.ndarray
    Y: np.ndarray
    # branches
    branch_refs: tuple[BranchRef, ...]
    f: np.ndarray
    t: np.ndarray
    y_series: np.ndarray
    y_sh_half: np.ndarray
    is_trafo: np.ndarray
    i_max_pu: np.ndarray
    i_base_ka: np.ndarray
    rating: np.ndarray  # max_i_ka for lines, sn_mva for transformers
    # injections
    gen_idx: np.ndarray
    gen_bus: np.ndarray
    load_idx: np.ndarray
    load_bus: np.ndarray
    y_shunt: np.ndarray
    s_base: float = 100.0
    extra: dict = field(default_factory=dict)

    @property
    def n_bus(self):
        return self.bus_ids.size

    @property
    def n_branch(self):
        return self.f.size

    @cached_property
    def gen_incidence(self):
        """(n_bus, n_gen_total) 0/1 matrix summing generator output per bus."""
        m = np.zeros((self.n_bus, len(self.network.generators)))
        m[self.gen_bus, self.gen_idx] = 1.0
        return m

    @cached_property
    def pq_order(self):
        """Non-slack buses in greedy minimum-degree order (limits LU fill-in)."""
        adj = {int(i): set() for i in self.pq}
        for i, j in zip(self.f, self.t):
            i, j = int(i), int(j)
            if i in adj and j in adj:
                adj[i].add(j)
                adj[j].add(i)
        order = []
        while adj:
            v = min(adj, key=lambda k: (len(adj[k]), k))
            nbrs = adj.pop(v)
            for a in nbrs:
                adj[a].discard(v)
                adj[a].update(nbrs - {a})
            order.append(v)
        return np.array(order, dtype=np.int64)

    @cached_property
    def load_incidence(self):
        m = np.zeros((self.n_bus, len(self.network.loads)))
        m[self.load_bus, self.load_idx] = 1.0
        return m


def _line_params(net, ln, vn):
    z_base = vn ** 2 / net.s_base_mva
    z = complex(ln.r_ohm_per_km, ln.x_ohm_per_km) * ln.length_km / z_base
    b = 2.0 * math.pi * net.f_hz * ln.c_nf_per_km * 1e-9 * ln.length_km * z_base
    return z, 0.5j * b


def _trafo_z(net, tr, vn_hv_bus):
    ratio = net.s_base_mva / tr.sn_mva
    r = tr.vkr_percent / 100.0 * ratio
    x = math.sqrt(max(tr.vk_percent ** 2 - tr.vkr_percent ** 2, 0.0)) / 100.0 * ratio
    # impedance is referred to the HV winding; re-base onto the bus voltage
    return complex(r, x) * (tr.vn_hv_kv / vn_hv_bus) ** 2


def compile_network(net: Network) -> CompiledNetwork:
    live = [b for b in net.buses if b.in_service]
    pos = {b.id: k for k, b in enumerate(live)}
    n = len(live)
    vn = np.array([b.vn_kv for b in live], dtype=float)
    slack = pos[net.ext_grid.bus]

    refs, f, t, ys, ysh, trafo, imax, ibase, rating = [], [], [], [], [], [], [], [], []
    for ln in sorted(net.lines, key=lambda e: e.id):
        if not ln.in_service:
            continue
        i, j = pos[ln.from_bus], pos[ln.to_bus]
        z, half = _line_params(net, ln, vn[i])
        if z == 0:
            raise NetworkError(f"line {ln.id}: zero series impedance")
        base = net.s_base_mva / (math.sqrt(3.0) * vn[i])
        refs.append(BranchRef("line", ln.id))
        f.append(i), t.append(j), ys.append(1.0 / z), ysh.append(half), trafo.append(False)
        imax.append(ln.max_i_ka / base), ibase.append(base), rating.append(ln.max_i_ka)
    for tr in sorted(net.transformers, key=lambda e: e.id):
        if not tr.in_service:
            continue
        i, j = pos[tr.hv_bus], pos[tr.lv_bus]
        z = _trafo_z(net, tr, vn[i])
        if z == 0:
            raise NetworkError(f"transformer {tr.id}: zero series impedance")
        base = net.s_base_mva / (math.sqrt(3.0) * vn[i])
        refs.append(BranchRef("trafo", tr.id))
        f.append(i), t.append(j), ys.append(1.0 / z), ysh.append(0j), trafo.append(True)
        imax.append(tr.sn_mva / net.s_base_mva), ibase.append(base), rating.append(tr.sn_mva)

    f = np.array(f, dtype=np.int64)
    t = np.array(t, dtype=np.int64)
    ys = np.array(ys, dtype=complex)
    ysh = np.array(ysh, dtype=complex)

    y_shunt = np.zeros(n, dtype=complex)
    for sh in net.shunts:
        if sh.in_service:
            y_shunt[pos[sh.bus]] += complex(sh.p_mw, -sh.q_mvar) / net.s_base_mva

    Y = np.zeros((n, n), dtype=complex)
    np.add.at(Y, (f, f), ys + ysh)
    np.add.at(Y, (t, t), ys + ysh)
    np.add.at(Y, (f, t), -ys)
    np.add.at(Y, (t, f), -ys)
    Y[np.diag_indices(n)] += y_shunt

    gen_idx = np.array([k for k, g in enumerate(net.generators) if g.in_service], dtype=np.int64)
    gen_bus = np.array([pos[net.generators[k].bus] for k in gen_idx], dtype=np.int64)
    load_idx = np.array([k for k, ld in enumerate(net.loads) if ld.in_service], dtype=np.int64)
    load_bus = np.array([pos[net.loads[k].bus] for k in load_idx], dtype=np.int64)

    return CompiledNetwork(
        network=net,
        bus_ids=np.array([b.id for b in live], dtype=np.int64),
        vn_kv=vn,
        slack=slack,
        vm_slack=float(net.ext_grid.vm_pu),
        pq=np.array([k for k in range(n) if k != slack], dtype=np.int64),
        Y=Y,
        branch_refs=tuple(refs),
        f=f,
        t=t,
        y_series=ys,
        y_sh_half=ysh,
        is_trafo=np.array(trafo, dtype=bool),
        i_max_pu=np.array(imax, dtype=float),
        i_base_ka=np.array(ibase, dtype=float),
        rating=np.array(rating, dtype=float),
        gen_idx=gen_idx,
        gen_bus=gen_bus,
        load_idx=load_idx,
        load_bus=load_bus,
        y_shunt=y_shunt,
        s_base=net.s_base_mva,
    )


def build_admittance(net: Network) -> AdmittanceMatrix:
    c = compile_network(net)
    return AdmittanceMatrix(
        bus_ids=tuple(int(b) for b in c.bus_ids),
        Y=c.Y,
        branch_refs=c.branch_refs,
        series_abs=np.abs(c.y_series),
    )
