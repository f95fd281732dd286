from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from ..powerflow import PowerFlowError, solve_power_flow
from ..rsae import assess
from .formulation import RedispatchProblem
from .ipm import IPMOptions, solve_nlp

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
SOLVER_FAILURE = "solver-failure"

SLACK_TOL_PU = 1e-4
INFEAS_TOL = 1e-6


@dataclass
class Verification:
    violations: int
    slack_deviation_pu: float
    max_pf_slack_mvar: float
    converged: bool = True
    message: str = ""
    pf_tol_mvar: float = 1e-4

    @property
    def passed(self):
        return (self.converged and self.violations == 0 and self.slack_deviation_pu <= SLACK_TOL_PU
                and self.max_pf_slack_mvar <= self.pf_tol_mvar)

    def to_dict(self):
        return {"violations": self.violations, "slack_deviation_pu": self.slack_deviation_pu,
                "max_pf_slack_mvar": self.max_pf_slack_mvar, "power_flow_converged": self.converged,
                "message": self.message}


@dataclass
class SetpointSchedule:
    timestamp: str
    mode: str
    gen_ids: list[int]
    p_base_mw: np.ndarray
    q_base_mvar: np.ndarray
    p_new_mw: np.ndarray
    q_new_mvar: np.ndarray
    objective: float
    status: str
    message: str = ""
    iterations: int = 0
    p_ext_mw: float = float("nan")
    q_ext_mvar: float = float("nan")
    weights: tuple = (10.0, 1.0)
    vm_pu: np.ndarray | None = field(default=None, repr=False)
    va_rad: np.ndarray | None = field(default=None, repr=False)
    verification: Verification | None = None
    restoration_violation: float | None = None

    @property
    def dp_mw(self):
        return self.p_new_mw - self.p_base_mw

    @property
    def dq_mvar(self):
        return self.q_new_mvar - self.q_base_mvar

    def recomputed_objective(self):
        w_p, w_q = self.weights
        return float(w_p * np.sum(self.dp_mw ** 2) + w_q * np.sum(self.dq_mvar ** 2))

    def to_dict(self):
        gens = [{"generator": int(g), "p_base_mw": float(pb), "q_base_mvar": float(qb),
                 "p_new_mw": float(pn), "q_new_mvar": float(qn), "dp_mw": float(pn - pb),
                 "dq_mvar": float(qn - qb)}
                for g, pb, qb, pn, qn in zip(self.gen_ids, self.p_base_mw, self.q_base_mvar,
                                             self.p_new_mw, self.q_new_mvar)]
        return {
            "timestamp": self.timestamp,
            "mode": self.mode,
            "status": self.status,
            "message": self.message,
            "objective": self.objective,
            "iterations": self.iterations,
            "p_ext_mw": self.p_ext_mw,
            "q_ext_mvar": self.q_ext_mvar,
            "weights": {"w_p": self.weights[0], "w_q": self.weights[1]},
            "generators": gens,
            "verification": self.verification.to_dict() if self.verification else None,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def write_deltas_csv(schedules, fh, scenario=""):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("scenario", "timestamp", "mode", "generator", "dp_mw", "dq_mvar"))
    for s in schedules:
        if s.status != OPTIMAL:
            continue
        for g, dp, dq in zip(s.gen_ids, s.dp_mw, s.dq_mvar):
            w.writerow((scenario, s.timestamp, s.mode, int(g), repr(float(dp)), repr(float(dq))))


# ---------------------------------------------------------------------------

def _ipm_options(problem):
    return IPMOptions(max_iter=problem.config.max_iter)


def _restoration(problem: RedispatchProblem, x0):
    """Minimum-violation phase: L1-elastic equalities, branch rows and voltage band.

    Device limits (envelope, P bounds, angle box) stay hard; they are always
    satisfiable by a zero output. Returns (x, total violation, converged).
    """
    nx, neq = problem.nx, problem.n_eq
    h0, _ = problem.inequalities(x0)
    nb_rows = problem.n_branch_rows
    nv = problem.nv
    nlin = problem.A_lin.shape[0]
    # row layout: branch rows, envelope (2ng), P bounds (2ng), voltage band, angle box
    ng = problem.ng
    v_rows = nb_rows + 4 * ng + np.arange(2 * nv)
    soft = np.concatenate([np.arange(nb_rows), v_rows])
    ns = soft.size
    nz = nx + 2 * neq + ns
    rho = 1e-6

    def split(y):
        return y[:nx], y[nx:nx + neq], y[nx + neq:nx + 2 * neq], y[nx + 2 * neq:]

    def fun(y):
        x, sp, sm, r = split(y)
        d = x - x0
        f = sp.sum() + sm.sum() + r.sum() + 0.5 * rho * d @ d
        df = np.concatenate([rho * d, np.ones(2 * neq + ns)])
        return f, df

    def eq(y):
        x, sp, sm, _ = split(y)
        g, J = problem.equalities(x)
        Jz = np.zeros((neq, nz))
        Jz[:, :nx] = J
        Jz[:, nx:nx + neq] = np.eye(neq)
        Jz[:, nx + neq:nx + 2 * neq] = -np.eye(neq)
        return g + sp - sm, Jz

    def ineq(y):
        x, sp, sm, r = split(y)
        h, J = problem.inequalities(x)
        h = h.copy()
        h[soft] -= r
        Jz = np.zeros((h.size + 2 * neq + ns, nz))
        Jz[:h.size, :nx] = J
        Jz[soft, nx + 2 * neq + np.arange(ns)] = -1.0
        k = h.size
        Jz[k:k + 2 * neq + ns, nx:] = -np.eye(2 * neq + ns)
        return np.concatenate([h, -y[nx:]]), Jz

    def hess(y, lam, mu):
        x = y[:nx]
        H = np.zeros((nz, nz))
        H[:nx, :nx] = problem.hessian(x, lam, mu[:nb_rows + nlin], cost_mult=0.0)
        H[np.arange(nx), np.arange(nx)] += rho
        return H

    g0, _ = problem.equalities(x0)
    y0 = np.concatenate([x0, np.maximum(-g0, 0) + 1e-3, np.maximum(g0, 0) + 1e-3,
                         np.maximum(h0[soft], 0) + 1e-3])
    res = solve_nlp(fun, eq, ineq, hess, y0, IPMOptions(max_iter=200))
    x, sp, sm, r = split(res.x)
    return x, float(sp.sum() + sm.sum() + r.sum()), res.converged


def _finish(problem, x, status, msg, iterations):
    c = problem.net
    p_new, q_new = problem.setpoints_mw(x)
    gens = problem.gens
    vm, va = problem.full_state(x)
    # slack reactive exchange closes the balance the optimiser left free
    from ..powerflow import bus_injections, slack_injection
    p_inj, q_inj = bus_injections(c, problem.load_p_mw, problem.load_q_mvar, p_new, q_new)
    p_ext, q_ext = slack_injection(c, vm, va, p_inj, q_inj)
    sched = SetpointSchedule(
        timestamp=problem.timestamp,
        mode=problem.mode,
        gen_ids=[c.network.generators[k].id for k in gens],
        p_base_mw=problem.p_base_mw[gens].astype(float),
        q_base_mvar=problem.q_base_mvar[gens].astype(float),
        p_new_mw=p_new[gens],
        q_new_mvar=q_new[gens],
        objective=0.0,
        status=status,
        message=msg,
        iterations=iterations,
        p_ext_mw=float(p_ext),
        q_ext_mvar=float(q_ext),
        weights=(problem.config.w_p, problem.config.w_q),
        vm_pu=vm,
        va_rad=va,
    )
    sched.objective = sched.recomputed_objective()
    return sched


def solve(problem: RedispatchProblem, verify_result: bool = True, point=None) -> SetpointSchedule:
    """Solve the redispatch NLP; infeasibility is only declared after restoration fails.

    With ``verify_result`` an optimal schedule is re-checked by an independent
    power flow (see :func:`verify`) and downgraded to ``solver-failure`` if the
    check fails. ``point`` is the operating point the problem was built from;
    it is reconstructed from the problem when omitted.
    """
    x0 = problem.initial_point()
    opts = _ipm_options(problem)
    res = solve_nlp(problem.objective, problem.equalities, problem.inequalities,
                    problem.hessian, x0, opts)
    iters = res.iterations
    restoration = None
    if not res.converged:
        log.debug("%s %s: IPM %s; entering restoration", problem.timestamp, problem.mode, res.message)
        xr, viol, rconv = _restoration(problem, x0)
        restoration = viol
        if viol > INFEAS_TOL and rconv:
            sched = _finish(problem, xr, INFEASIBLE,
                            f"no feasible point: minimum total violation {viol:.3e} p.u.", iters)
            sched.restoration_violation = viol
            return sched
        if viol <= INFEAS_TOL:
            res = solve_nlp(problem.objective, problem.equalities, problem.inequalities,
                            problem.hessian, xr, opts)
            iters += res.iterations
        if not res.converged:
            sched = _finish(problem, res.x, SOLVER_FAILURE,
                            f"interior point: {res.message} (restoration violation {viol:.3e}, "
                            f"restoration {'converged' if rconv else 'not converged'})", iters)
            sched.restoration_violation = viol
            return sched

    sched = _finish(problem, res.x, OPTIMAL, "converged", iters)
    sched.restoration_violation = restoration
    if verify_result:
        if point is None:
            from ..powerflow import OperatingPoint
            point = OperatingPoint(problem.timestamp, problem.load_p_mw, problem.load_q_mvar,
                                   problem.p_base_mw, problem.q_base_mvar)
        verify(sched, problem, point)
    return sched


def verify(schedule: SetpointSchedule, problem: RedispatchProblem, point) -> Verification:
    """Re-run power flow and assessment with the new set-points.

    Records the remaining violation count, the external import deviation from
    the target (p.u.) and the worst power-factor envelope excess (MVAr). A
    failed check downgrades an optimal schedule to ``solver-failure``.
    """
    c = problem.net
    p_full = point.gen_p_mw.copy()
    q_full = point.gen_q_mvar.copy()
    gens = problem.gens
    p_full[gens] = schedule.p_new_mw
    q_full[gens] = schedule.q_new_mvar
    new_point = point.with_generation(p_full, q_full)
    k = problem.config.k_pf
    pf_slack = float(np.max(np.abs(schedule.q_new_mvar) - k * np.abs(schedule.p_new_mw), initial=0.0))
    try:
        sol = solve_power_flow(c, new_point)
    except PowerFlowError as exc:
        rec = Verification(-1, float("inf"), pf_slack, converged=False, message=str(exc),
                           pf_tol_mvar=INFEAS_TOL * c.s_base)
    else:
        report = assess(sol, problem.config.limits)
        dev = abs(sol.p_ext_mw - problem.p_ext_target_mw) / c.s_base if problem.fix_import else 0.0
        rec = Verification(len(report.violations), float(dev), pf_slack,
                           message=report.summary() if report.violations else "",
                           pf_tol_mvar=INFEAS_TOL * c.s_base)
    schedule.verification = rec
    if schedule.status == OPTIMAL and not rec.passed:
        schedule.status = SOLVER_FAILURE
        schedule.message = f"verification failed: {rec.violations} violation(s), " \
                           f"slack deviation {rec.slack_deviation_pu:.2e} p.u., " \
                           f"envelope excess {rec.max_pf_slack_mvar:.2e} MVAr {rec.message}".strip()
    return rec
