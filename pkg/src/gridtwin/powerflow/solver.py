from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..network import BranchRef, CompiledNetwork, Network, compile_network
from . import kernels
from .kernels import CONVERGED, MAX_ITER, NONFINITE, SINGULAR

log = logging.getLogger(__name__)


class PowerFlowError(RuntimeError):
    pass


class PowerFlowDiverged(PowerFlowError):
    def __init__(self, msg, last_mismatch=float("nan"), iterations=0):
        super().__init__(msg)
        self.last_mismatch = last_mismatch
        self.iterations = iterations


class SingularJacobian(PowerFlowError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    tol_pu: float = 1e-8
    max_iter: int = 30

    def __post_init__(self):
        if not self.tol_pu > 0 or self.max_iter < 1:
            raise ValueError("tol_pu must be positive and max_iter >= 1")


@dataclass
class OperatingPoint:
    """Injections for one timestamp, aligned with the network element tuples."""

    timestamp: str
    load_p_mw: np.ndarray
    load_q_mvar: np.ndarray
    gen_p_mw: np.ndarray
    gen_q_mvar: np.ndarray

    def __post_init__(self):
        for name in ("load_p_mw", "load_q_mvar", "gen_p_mw", "gen_q_mvar"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.isfinite(arr).all():
                raise ValueError(f"operating point {self.timestamp}: non-finite {name}")
            setattr(self, name, arr)

    def check(self, net: Network):
        if self.load_p_mw.shape != (len(net.loads),) or self.load_q_mvar.shape != (len(net.loads),):
            raise ValueError(f"operating point {self.timestamp}: expected {len(net.loads)} load entries")
        if self.gen_p_mw.shape != (len(net.generators),) or self.gen_q_mvar.shape != (len(net.generators),):
            raise ValueError(f"operating point {self.timestamp}: expected {len(net.generators)} generator entries")

    def with_generation(self, p_mw, q_mvar) -> "OperatingPoint":
        return OperatingPoint(self.timestamp, self.load_p_mw.copy(), self.load_q_mvar.copy(),
                              np.asarray(p_mw, float).copy(), np.asarray(q_mvar, float).copy())

    def scaled_load(self, factor) -> "OperatingPoint":
        return OperatingPoint(self.timestamp, self.load_p_mw * factor, self.load_q_mvar * factor,
                              self.gen_p_mw.copy(), self.gen_q_mvar.copy())


@dataclass
class OperatingSeries:
    """A horizon of operating points as 2-D arrays (time x element)."""

    timestamps: np.ndarray  # datetime64[s]
    load_p_mw: np.ndarray
    load_q_mvar: np.ndarray
    gen_p_mw: np.ndarray
    gen_q_mvar: np.ndarray

    def __len__(self):
        return self.timestamps.size

    def label(self, k) -> str:
        return str(self.timestamps[k]) + "Z"

    def point(self, k) -> OperatingPoint:
        return OperatingPoint(self.label(k), self.load_p_mw[k], self.load_q_mvar[k],
                              self.gen_p_mw[k], self.gen_q_mvar[k])

    def index_of(self, stamp) -> int:
        key = np.datetime64(str(stamp).replace("Z", "").replace("+00:00", ""), "s")
        hit = np.flatnonzero(self.timestamps == key)
        if not hit.size:
            raise KeyError(f"timestamp {stamp} not in series")
        return int(hit[0])

    def scaled_load(self, factor) -> "OperatingSeries":
        return OperatingSeries(self.timestamps, self.load_p_mw * factor, self.load_q_mvar * factor,
                               self.gen_p_mw, self.gen_q_mvar)

    def subset(self, idx) -> "OperatingSeries":
        return OperatingSeries(self.timestamps[idx], self.load_p_mw[idx], self.load_q_mvar[idx],
                               self.gen_p_mw[idx], self.gen_q_mvar[idx])


@dataclass
class BranchResults:
    refs: tuple[BranchRef, ...]
    i_ka: np.ndarray
    p_from_mw: np.ndarray
    q_from_mvar: np.ndarray
    p_to_mw: np.ndarray
    q_to_mvar: np.ndarray
    s_max_mva: np.ndarray
    loading_percent: np.ndarray


@dataclass
class PowerFlowSolution:
    timestamp: str
    bus_ids: np.ndarray
    vm_pu: np.ndarray
    va_rad: np.ndarray
    branches: BranchResults
    p_ext_mw: float
    q_ext_mvar: float
    iterations: int
    max_mismatch: float
    net: CompiledNetwork

    def to_dict(self):
        br = self.branches
        return {
            "timestamp": self.timestamp,
            "iterations": int(self.iterations),
            "max_mismatch_pu": float(self.max_mismatch),
            "p_ext_mw": float(self.p_ext_mw),
            "q_ext_mvar": float(self.q_ext_mvar),
            "buses": [{"bus": int(b), "vm_pu": float(v), "va_deg": float(np.degrees(a))}
                      for b, v, a in zip(self.bus_ids, self.vm_pu, self.va_rad)],
            "branches": [{"element": str(r), "i_ka": float(i), "p_from_mw": float(pf),
                          "q_from_mvar": float(qf), "p_to_mw": float(pt), "q_to_mvar": float(qt),
                          "loading_percent": float(lp)}
                         for r, i, pf, qf, pt, qt, lp in zip(br.refs, br.i_ka, br.p_from_mw,
                                                             br.q_from_mvar, br.p_to_mw,
                                                             br.q_to_mvar, br.loading_percent)],
        }


# --------------------------------------------------------------------------
# injections and mismatch

def bus_injections(c: CompiledNetwork, load_p, load_q, gen_p, gen_q):
    """Scheduled net injections (p.u.) per bus; works on 1-D or (T, n_el) inputs."""
    gp = np.asarray(gen_p, float)
    gq = np.asarray(gen_q, float)
    lp = np.asarray(load_p, float)
    lq = np.asarray(load_q, float)
    p = (gp @ c.gen_incidence.T - lp @ c.load_incidence.T) / c.s_base
    q = (gq @ c.gen_incidence.T - lq @ c.load_incidence.T) / c.s_base
    return p, q


def power_mismatch(c: CompiledNetwork, vm, va, p_inj, q_inj):
    """Computed minus scheduled bus injection, p.u.; plain complex arithmetic."""
    V = np.asarray(vm) * np.exp(1j * np.asarray(va))
    S = V * np.conj(V @ c.Y.T)
    return S.real - p_inj, S.imag - q_inj


def slack_injection(c: CompiledNetwork, vm, va, p_inj, q_inj):
    """External grid (P, Q) in MW/MVAr that closes the slack bus balance."""
    dp, dq = power_mismatch(c, vm, va, p_inj, q_inj)
    return dp[..., c.slack] * c.s_base, dq[..., c.slack] * c.s_base


# --------------------------------------------------------------------------
# branch quantities

def series_current_sq(c: CompiledNetwork, vm, va):
    """|y|^2 (Vi^2 + Vj^2 - 2 Vi Vj cos(ti - tj)) per branch, p.u."""
    vi, vj = vm[..., c.f], vm[..., c.t]
    d = va[..., c.f] - va[..., c.t]
    return np.abs(c.y_series) ** 2 * (vi * vi + vj * vj - 2.0 * vi * vj * np.cos(d))


def compute_branch_results(c: CompiledNetwork, vm, va) -> BranchResults:
    vm = np.asarray(vm, float)
    va = np.asarray(va, float)
    V = vm * np.exp(1j * va)
    Vf, Vt = V[..., c.f], V[..., c.t]
    i_series = np.sqrt(np.maximum(series_current_sq(c, vm, va), 0.0))
    i_from = (Vf - Vt) * c.y_series + Vf * c.y_sh_half
    i_to = (Vt - Vf) * c.y_series + Vt * c.y_sh_half
    s_from = Vf * np.conj(i_from) * c.s_base
    s_to = Vt * np.conj(i_to) * c.s_base
    s_max = np.maximum(np.abs(s_from), np.abs(s_to))
    i_ka = i_series * c.i_base_ka
    loading = np.where(c.is_trafo, 100.0 * s_max / c.rating, 100.0 * i_ka / c.rating)
    return BranchResults(c.branch_refs, i_ka, s_from.real, s_from.imag, s_to.real, s_to.imag,
                         s_max, loading)


# --------------------------------------------------------------------------
# drivers

def _flat_start(c: CompiledNetwork, T):
    # every magnitude at the slack set-point: a no-load case is then solved exactly
    return np.full((T, c.n_bus), c.vm_slack), np.zeros((T, c.n_bus))


@dataclass
class BatchResult:
    net: CompiledNetwork
    vm: np.ndarray
    va: np.ndarray
    iterations: np.ndarray
    max_mismatch: np.ndarray
    status: np.ndarray
    p_ext_mw: np.ndarray
    q_ext_mvar: np.ndarray

    @property
    def converged(self):
        return self.status == CONVERGED


def solve_batch(net, load_p, load_q, gen_p, gen_q, options: SolverOptions | None = None,
                init=None) -> BatchResult:
    """Solve many operating points on one topology; never raises on divergence."""
    c = net if isinstance(net, CompiledNetwork) else compile_network(net)
    opts = options or SolverOptions()
    p_inj, q_inj = bus_injections(c, load_p, load_q, gen_p, gen_q)
    p_inj = np.atleast_2d(p_inj)
    q_inj = np.atleast_2d(q_inj)
    T = p_inj.shape[0]
    if init is None:
        vm0, va0 = _flat_start(c, T)
    else:
        vm0, va0 = (np.array(np.atleast_2d(a), float) for a in init)
        vm0[:, c.slack] = c.vm_slack
        va0[:, c.slack] = 0.0
    vm, va, iters, mis, status = kernels.newton_batch(
        np.ascontiguousarray(c.Y.real), np.ascontiguousarray(c.Y.imag),
        np.ascontiguousarray(p_inj), np.ascontiguousarray(q_inj),
        np.ascontiguousarray(vm0), np.ascontiguousarray(va0),
        c.pq_order, float(opts.tol_pu), int(opts.max_iter))
    p_ext, q_ext = slack_injection(c, vm, va, p_inj, q_inj)
    return BatchResult(c, vm, va, iters, mis, status, p_ext, q_ext)


def solve_power_flow(network, point: OperatingPoint, options: SolverOptions | None = None,
                     init=None) -> PowerFlowSolution:
    c = network if isinstance(network, CompiledNetwork) else compile_network(network)
    point.check(c.network)
    res = solve_batch(c, point.load_p_mw, point.load_q_mvar, point.gen_p_mw, point.gen_q_mvar,
                      options, init=init)
    st = int(res.status[0])
    if st == SINGULAR:
        raise SingularJacobian(f"{point.timestamp}: singular Jacobian after {res.iterations[0]} iterations")
    if st in (MAX_ITER, NONFINITE):
        raise PowerFlowDiverged(
            f"{point.timestamp}: power flow diverged (max mismatch {res.max_mismatch[0]:.3e} p.u. "
            f"after {res.iterations[0]} iterations)",
            last_mismatch=float(res.max_mismatch[0]), iterations=int(res.iterations[0]))
    vm, va = res.vm[0], res.va[0]
    return PowerFlowSolution(
        timestamp=point.timestamp,
        bus_ids=c.bus_ids,
        vm_pu=vm,
        va_rad=va,
        branches=compute_branch_results(c, vm, va),
        p_ext_mw=float(res.p_ext_mw[0]),
        q_ext_mvar=float(res.q_ext_mvar[0]),
        iterations=int(res.iterations[0]),
        max_mismatch=float(res.max_mismatch[0]),
        net=c,
    )
