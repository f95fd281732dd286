"""AC redispatch problem: quadratic deviation cost under full AC constraints.

Decision vector (all p.u. on the system base), in this order::

    va[non-slack] | vm[non-slack] | P_g | Q_g

for every in-service generator with a positive historical maximum; units
with a zero historical maximum are pinned at P = Q = 0. The power-factor
envelope ``|Q_g| <= k |P_g|`` (``k = tan(arccos pf_min)``) is the union of
two cones that meet only at the origin. The problem is posed on the cone
holding the base set-point, ``s_g = sign(P_g^base)`` (``+1`` at zero)::

    -k s_g P_g <= Q_g <= k s_g P_g

These rows are linear and exact on that cone. They also imply
``s_g P_g >= 0``, so the unit cannot reverse its active power.

Equalities: active balance at every bus (the slack bus uses the fixed
external import, or is dropped when the import is left free) and reactive
balance at every non-slack bus (the slack's
reactive exchange is free and recovered afterwards). Inequalities: squared
series current per branch, apparent power at both transformer terminals,
the envelope above, the voltage band, angle box and the +-85% active bounds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..network import CompiledNetwork, compile_network
from ..rsae import SecurityLimits


class RedispatchError(ValueError):
    """The redispatch problem cannot be formed from the given data."""


@dataclass(frozen=True)
class RedispatchConfig:
    w_p: float = 10.0
    w_q: float = 1.0
    p_bound_fraction: float = 0.85
    pf_min: float = 0.95
    limits: SecurityLimits = field(default_factory=SecurityLimits)
    limit_margin_pu: float = 1e-6
    transformer_mva_limit: bool = True
    max_iter: int = 150

    def __post_init__(self):
        if not (self.w_p > 0 and self.w_q > 0):
            raise ValueError("redispatch weights must be positive")
        if not 0 < self.pf_min <= 1:
            raise ValueError("pf_min must lie in (0, 1]")

    @property
    def k_pf(self):
        return math.tan(math.acos(self.pf_min))


@dataclass
class RedispatchProblem:
    net: CompiledNetwork
    timestamp: str
    mode: str  # "corrective" or "preventive:<element>"
    load_p_mw: np.ndarray
    load_q_mvar: np.ndarray
    p_base_mw: np.ndarray  # full generator vectors (document order)
    q_base_mvar: np.ndarray
    hist_max_mw: np.ndarray
    p_ext_target_mw: float
    config: RedispatchConfig
    vm0: np.ndarray
    va0: np.ndarray
    islanded_buses: frozenset = frozenset()
    fix_import: bool = True

    def __post_init__(self):
        c = self.net
        self.gens = c.gen_idx  # in-service generators (document indices)
        h = self.hist_max_mw[self.gens]
        self.free = self.gens[h > 0]
        self.pinned = self.gens[h <= 0]
        self.free_bus = c.gen_bus[h > 0]
        n = c.n_bus
        self.nb = n
        self.nv = n - 1
        self.ng = self.free.size
        self.nx = 2 * self.nv + 2 * self.ng
        self._vsel = c.pq  # non-slack bus positions
        self._nonslack_rows = c.pq
        # active balance rows: every bus, or only non-slack buses when the import floats
        self._p_rows = np.arange(n) if self.fix_import else c.pq
        self.k = self.config.k_pf
        sb = c.s_base
        lim = self.config.limits
        m = self.config.limit_margin_pu
        self.v_lo = lim.v_min_pu + m
        self.v_hi = lim.v_max_pu - m
        frac = lim.loading_max_percent / 100.0
        self.i_lim_sq = (frac * c.i_max_pu) ** 2 * (1.0 - m)
        self.ysq = np.abs(c.y_series) ** 2
        self.trafos = np.flatnonzero(c.is_trafo) if self.config.transformer_mva_limit else np.zeros(0, int)
        self.s_lim_sq = (frac * c.rating[self.trafos] / sb) ** 2 * (1.0 - m)
        self.p_hi = self.config.p_bound_fraction * self.hist_max_mw[self.free] / sb
        self.pb = self.p_base_mw[self.free] / sb
        self.qb = self.q_base_mvar[self.free] / sb
        # fixed injections per bus: loads, pinned units, external import at the slack
        p_fix = -(c.load_incidence @ self.load_p_mw) / sb
        q_fix = -(c.load_incidence @ self.load_q_mvar) / sb
        if self.fix_import:
            p_fix[c.slack] += self.p_ext_target_mw / sb
        self.p_fix = p_fix
        self.q_fix = q_fix
        self.Cg = np.zeros((n, self.ng))
        self.Cg[self.free_bus, np.arange(self.ng)] = 1.0
        self.n_eq = self._p_rows.size + self.nv
        self._lin_ineq()

    # --- bookkeeping -----------------------------------------------------
    @property
    def n_generator_vars(self):
        """Generator set-point variables (P and Q per in-service unit)."""
        return 2 * self.gens.size

    @property
    def n_voltage_vars(self):
        """Voltage magnitude and angle per bus, slack entries included."""
        return 2 * self.nb

    def sl(self, name):
        nv, ng = self.nv, self.ng
        return {
            "va": slice(0, nv),
            "vm": slice(nv, 2 * nv),
            "p": slice(2 * nv, 2 * nv + ng),
            "q": slice(2 * nv + ng, 2 * nv + 2 * ng),
        }[name]

    def full_state(self, x):
        c = self.net
        vm = np.empty(self.nb)
        va = np.zeros(self.nb)
        vm[c.slack] = c.vm_slack
        vm[self._vsel] = x[self.sl("vm")]
        va[self._vsel] = x[self.sl("va")]
        return vm, va

    def setpoints_mw(self, x):
        """Full-length (document order) P/Q vectors in MW/MVAr for ``x``."""
        sb = self.net.s_base
        p = np.zeros_like(self.p_base_mw, dtype=float)
        q = np.zeros_like(self.q_base_mvar, dtype=float)
        p[self.free] = x[self.sl("p")] * sb
        q[self.free] = x[self.sl("q")] * sb
        return p, q

    def initial_point(self):
        x = np.zeros(self.nx)
        x[self.sl("va")] = self.va0[self._vsel]
        x[self.sl("vm")] = self.vm0[self._vsel]
        p = np.clip(self.pb, -self.p_hi, self.p_hi)
        x[self.sl("p")] = p
        x[self.sl("q")] = np.clip(self.qb, -self.k * np.abs(p), self.k * np.abs(p))
        return x

    # --- objective ---------------------------------------------------------
    def objective(self, x):
        dp = x[self.sl("p")] - self.pb
        dq = x[self.sl("q")] - self.qb
        w_p, w_q = self.config.w_p, self.config.w_q
        f = w_p * dp @ dp + w_q * dq @ dq
        df = np.zeros(self.nx)
        df[self.sl("p")] = 2.0 * w_p * dp
        df[self.sl("q")] = 2.0 * w_q * dq
        return f, df

    def _obj_hess_diag(self):
        d = np.zeros(self.nx)
        d[self.sl("p")] = 2.0 * self.config.w_p
        d[self.sl("q")] = 2.0 * self.config.w_q
        return d

    # --- power balance -----------------------------------------------------
    def _sbus_derivs(self, vm, va):
        Y = self.net.Y
        V = vm * np.exp(1j * va)
        I = Y @ V
        S = V * np.conj(I)
        Vn = V / vm
        dS_dva = 1j * np.diag(V) @ np.conj(np.diag(I) - Y * V[None, :])
        dS_dvm = np.diag(V) @ np.conj(Y * Vn[None, :]) + np.diag(np.conj(I) * Vn)
        return S, dS_dva, dS_dvm

    def equalities(self, x):
        vm, va = self.full_state(x)
        S, dva, dvm = self._sbus_derivs(vm, va)
        p_inj = self.p_fix + self.Cg @ x[self.sl("p")]
        q_inj = self.q_fix + self.Cg @ x[self.sl("q")]
        rows = self._nonslack_rows
        pr = self._p_rows
        g = np.concatenate([S.real[pr] - p_inj[pr], S.imag[rows] - q_inj[rows]])
        J = np.zeros((self.n_eq, self.nx))
        n = pr.size
        J[:n, self.sl("va")] = dva.real[np.ix_(pr, self._vsel)]
        J[:n, self.sl("vm")] = dvm.real[np.ix_(pr, self._vsel)]
        J[:n, self.sl("p")] = -self.Cg[pr]
        J[n:, self.sl("va")] = dva.imag[np.ix_(rows, self._vsel)]
        J[n:, self.sl("vm")] = dvm.imag[np.ix_(rows, self._vsel)]
        J[n:, self.sl("q")] = -self.Cg[rows]
        return g, J

    def _d2sbus(self, vm, va, lam):
        """Second derivatives of lam' S(V) w.r.t. (va, vm); complex n x n blocks."""
        Y = self.net.Y
        V = vm * np.exp(1j * va)
        I = Y @ V
        A = np.diag(lam * V)
        B = Y * V[None, :]
        C = A @ np.conj(B)
        D = Y.conj().T * V[None, :]
        E = np.diag(np.conj(V)) @ (D * lam[None, :] - np.diag(D @ lam))
        F = C - A * np.conj(I)[None, :]
        Gi = 1.0 / vm
        Gaa = E + F
        Gva = 1j * Gi[:, None] * (E - F)
        Gav = Gva.T
        Gvv = Gi[:, None] * (C + C.T) * Gi[None, :]
        return Gaa, Gav, Gva, Gvv

    # --- branch limits -----------------------------------------------------
    def _branch_terms(self, vm, va):
        c = self.net
        f, t = c.f, c.t
        a = self.ysq
        vi, vj = vm[f], vm[t]
        d = va[f] - va[t]
        cs, sn = np.cos(d), np.sin(d)
        cur = a * (vi * vi + vj * vj - 2.0 * vi * vj * cs)
        # gradient wrt (va_i, va_j, vm_i, vm_j)
        g = np.stack([2 * a * vi * vj * sn, -2 * a * vi * vj * sn,
                      2 * a * (vi - vj * cs), 2 * a * (vj - vi * cs)], axis=1)
        H = np.empty((f.size, 4, 4))
        h_tt = 2 * a * vi * vj * cs
        H[:, 0, 0] = h_tt
        H[:, 1, 1] = h_tt
        H[:, 0, 1] = H[:, 1, 0] = -h_tt
        H[:, 0, 2] = H[:, 2, 0] = 2 * a * vj * sn
        H[:, 0, 3] = H[:, 3, 0] = 2 * a * vi * sn
        H[:, 1, 2] = H[:, 2, 1] = -2 * a * vj * sn
        H[:, 1, 3] = H[:, 3, 1] = -2 * a * vi * sn
        H[:, 2, 2] = 2 * a
        H[:, 3, 3] = 2 * a
        H[:, 2, 3] = H[:, 3, 2] = -2 * a * cs
        return cur, g, H

    def _trafo_terms(self, vm, cur, g, H):
        """V_end^2 * cur at both terminals of each transformer."""
        sel = self.trafos
        c = self.net
        vals, grads, hess = [], [], []
        for end, col in ((c.f, 2), (c.t, 3)):
            v = vm[end[sel]]
            cu, gg, HH = cur[sel], g[sel], H[sel]
            ev = np.zeros((sel.size, 4))
            ev[:, col] = 1.0
            vals.append(v * v * cu)
            grads.append(v[:, None] ** 2 * gg + 2 * (v * cu)[:, None] * ev)
            outer = ev[:, :, None] * gg[:, None, :]
            hess.append(v[:, None, None] ** 2 * HH + 2 * v[:, None, None] * (outer + outer.transpose(0, 2, 1))
                        + 2 * cu[:, None, None] * ev[:, :, None] * ev[:, None, :])
        return np.concatenate(vals), np.concatenate(grads), np.concatenate(hess)

    def _branch_cols(self, idx):
        """Decision-vector columns of (va_i, va_j, vm_i, vm_j) for branches ``idx``; -1 if fixed."""
        c = self.net
        pos = np.full(self.nb, -1)
        pos[self._vsel] = np.arange(self.nv)
        fi, ti = c.f[idx], c.t[idx]
        va_f, va_t = pos[fi], pos[ti]
        vm_f = np.where(va_f >= 0, va_f + self.nv, -1)
        vm_t = np.where(va_t >= 0, va_t + self.nv, -1)
        return np.stack([va_f, va_t, vm_f, vm_t], axis=1)

    # --- inequalities --------------------------------------------------------
    def _lin_ineq(self):
        """Constant rows A x <= b: envelope, P bounds, voltage band, angle box."""
        nv, ng, nx = self.nv, self.ng, self.nx
        rows, b = [], []

        def add(block, rhs):
            rows.append(block)
            b.append(rhs)

        eye_g = np.eye(ng)
        P, Q = self.sl("p"), self.sl("q")
        sgn = np.where(self.pb < 0, -1.0, 1.0)
        for sq in (1, -1):
            blk = np.zeros((ng, nx))
            blk[:, Q] = sq * eye_g
            blk[:, P] = -self.k * np.diag(sgn)
            add(blk, np.zeros(ng))
        for sp in (1, -1):
            blk = np.zeros((ng, nx))
            blk[:, P] = sp * eye_g
            add(blk, self.p_hi.copy())
        eye_v = np.eye(nv)
        blk = np.zeros((nv, nx)); blk[:, self.sl("vm")] = eye_v; add(blk, np.full(nv, self.v_hi))
        blk = np.zeros((nv, nx)); blk[:, self.sl("vm")] = -eye_v; add(blk, np.full(nv, -self.v_lo))
        blk = np.zeros((nv, nx)); blk[:, self.sl("va")] = eye_v; add(blk, np.full(nv, math.pi))
        blk = np.zeros((nv, nx)); blk[:, self.sl("va")] = -eye_v; add(blk, np.full(nv, math.pi))
        self.A_lin = np.vstack(rows) if rows else np.zeros((0, nx))
        self.b_lin = np.concatenate(b) if b else np.zeros(0)
        self.n_branch_rows = self.net.n_branch + 2 * self.trafos.size

    def nonlinear_ineq(self, x):
        vm, va = self.full_state(x)
        cur, g, H = self._branch_terms(vm, va)
        vals = [cur - self.i_lim_sq]
        grads, hess, idx = [g], [H], [np.arange(cur.size)]
        if self.trafos.size:
            tv, tg, tH = self._trafo_terms(vm, cur, g, H)
            vals.append(tv - np.concatenate([self.s_lim_sq, self.s_lim_sq]))
            grads.append(tg)
            hess.append(tH)
            idx.append(np.concatenate([self.trafos, self.trafos]))
        return np.concatenate(vals), np.concatenate(grads), np.concatenate(hess), np.concatenate(idx)

    def inequalities(self, x):
        hv, grads, _, idx = self.nonlinear_ineq(x)
        cols = self._branch_cols(idx)
        J = np.zeros((hv.size, self.nx))
        r = np.repeat(np.arange(hv.size), 4)
        cc = cols.ravel()
        keep = cc >= 0
        np.add.at(J, (r[keep], cc[keep]), grads.ravel()[keep])
        h = np.concatenate([hv, self.A_lin @ x - self.b_lin])
        return h, np.vstack([J, self.A_lin])

    # --- Lagrangian Hessian --------------------------------------------------
    def hessian(self, x, lam, mu, cost_mult=1.0):
        n, nv = self.nb, self.nv
        vm, va = self.full_state(x)
        npr = self._p_rows.size
        lam_p = np.zeros(n)
        lam_p[self._p_rows] = lam[:npr]
        lam_q = np.zeros(n)
        lam_q[self._nonslack_rows] = lam[npr:]
        Paa, Pav, Pva, Pvv = self._d2sbus(vm, va, lam_p.astype(complex))
        Qaa, Qav, Qva, Qvv = self._d2sbus(vm, va, lam_q.astype(complex))
        full = np.empty((2 * n, 2 * n))
        full[:n, :n] = Paa.real + Qaa.imag
        full[:n, n:] = Pav.real + Qav.imag
        full[n:, :n] = Pva.real + Qva.imag
        full[n:, n:] = Pvv.real + Qvv.imag
        sel = np.concatenate([self._vsel, n + self._vsel])
        Hx = np.zeros((self.nx, self.nx))
        Hx[:2 * nv, :2 * nv] = full[np.ix_(sel, sel)]

        _, _, Hb, idx = self.nonlinear_ineq(x)
        mu_b = mu[:idx.size]
        cols = self._branch_cols(idx)
        Hw = Hb * mu_b[:, None, None]
        rr = np.repeat(cols, 4, axis=1)
        cc = np.tile(cols, (1, 4))
        vals = Hw.reshape(idx.size, 16)
        keep = (rr >= 0) & (cc >= 0)
        np.add.at(Hx, (rr[keep], cc[keep]), vals[keep])
        Hx[np.diag_indices(self.nx)] += cost_mult * self._obj_hess_diag()
        return Hx

    # --- diagnostics -----------------------------------------------------------
    def max_violation(self, x):
        g, _ = self.equalities(x)
        h, _ = self.inequalities(x)
        return float(np.max(np.abs(g), initial=0.0)), float(np.max(h, initial=-np.inf))


def build_problem(network, point, mode: str = "corrective", config: RedispatchConfig | None = None,
                  hist_max_mw=None, p_ext_target_mw: float | None = None, warm_start=None,
                  islanded_buses=frozenset(), fix_import: bool = True) -> RedispatchProblem:
    """Assemble the redispatch NLP for one operating point.

    ``network`` is the (possibly post-outage, already pruned) topology.
    ``point`` carries the base generator set-points and loads. The external
    import is pinned to ``p_ext_target_mw``; when omitted it is taken from
    a power flow of ``point`` on ``network``. With ``fix_import=False`` the
    slack's active exchange is left free as well (used while the Base Case is
    being built, before any import level exists to hold). ``warm_start`` is
    an optional ``(vm, va)`` pair over the in-service buses.
    """
    from ..powerflow import solve_power_flow

    config = config or RedispatchConfig()
    c = network if hasattr(network, "Y") else compile_network(network)
    net = c.network
    point.check(net)
    if not c.gen_idx.size:
        raise RedispatchError("empty generator set: nothing to redispatch")
    hist = np.asarray(hist_max_mw if hist_max_mw is not None
                      else [g.p_hist_max_mw for g in net.generators], dtype=float)
    if hist.shape != (len(net.generators),) or not np.isfinite(hist[c.gen_idx]).all():
        raise RedispatchError("missing historical maximum for one or more generators")
    if (hist[c.gen_idx] < 0).any():
        raise RedispatchError("negative historical maximum")

    if warm_start is None or p_ext_target_mw is None:
        try:
            sol = solve_power_flow(c, point)
            ws = (sol.vm_pu, sol.va_rad)
            p_ext = sol.p_ext_mw
        except Exception:
            ws = (np.where(np.arange(c.n_bus) == c.slack, c.vm_slack, 1.0), np.zeros(c.n_bus))
            p_ext = None
        if warm_start is None:
            warm_start = ws
        if p_ext_target_mw is None:
            if p_ext is None:
                raise RedispatchError("base power flow diverged and no external import target given")
            p_ext_target_mw = p_ext

    vm0, va0 = (np.asarray(a, float) for a in warm_start)
    return RedispatchProblem(
        net=c, timestamp=point.timestamp, mode=mode,
        load_p_mw=point.load_p_mw, load_q_mvar=point.load_q_mvar,
        p_base_mw=point.gen_p_mw, q_base_mvar=point.gen_q_mvar,
        hist_max_mw=hist, p_ext_target_mw=float(p_ext_target_mw), config=config,
        vm0=vm0, va0=va0, islanded_buses=frozenset(islanded_buses), fix_import=bool(fix_import))
