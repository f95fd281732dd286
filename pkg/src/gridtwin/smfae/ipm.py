"""Primal-dual interior-point method for smooth NLPs.

Solves::

    min f(x)  s.t.  g(x) = 0,  h(x) <= 0

with exact first and second derivatives supplied by the caller. Inequalities
get slacks ``z > 0`` (``h(x) + z = 0``) and a log barrier whose weight
follows the average complementarity. Each iteration solves the condensed
Newton system::

    [ Lxx + Jh' diag(mu/z) Jh    Jg' ] [dx  ]   [ -(Lx + Jh' (mu*h + gamma)/z) ]
    [ Jg                          0  ] [dlam] = [ -g                          ]

followed by a fraction-to-boundary step on ``z`` (primal) and ``mu``
(dual). Convergence is declared on scaled feasibility, stationarity,
complementarity and cost-change measures.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class IPMOptions:
    max_iter: int = 150
    feastol: float = 1e-9
    gradtol: float = 1e-8
    comptol: float = 1e-9
    costtol: float = 1e-9
    xi: float = 0.99995
    sigma: float = 0.1
    z0: float = 1.0
    alpha_min: float = 1e-10
    reg: float = 1e-12


@dataclass
class IPMResult:
    x: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    z: np.ndarray
    f: float
    converged: bool
    iterations: int
    message: str
    feascond: float
    gradcond: float
    compcond: float
    max_eq: float
    max_ineq: float


def _conditions(x, z, lam, mu, f, f0, g, h, Lx):
    xn = np.linalg.norm(x, np.inf) if x.size else 0.0
    zn = np.linalg.norm(z, np.inf) if z.size else 0.0
    ln = np.linalg.norm(lam, np.inf) if lam.size else 0.0
    mn = np.linalg.norm(mu, np.inf) if mu.size else 0.0
    maxg = np.linalg.norm(g, np.inf) if g.size else 0.0
    maxh = max(float(h.max()), 0.0) if h.size else 0.0
    feas = max(maxg, maxh) / (1.0 + max(xn, zn))
    grad = np.linalg.norm(Lx, np.inf) / (1.0 + max(ln, mn))
    comp = float(z @ mu) / (1.0 + xn) if z.size else 0.0
    cost = abs(f - f0) / (1.0 + abs(f0))
    return feas, grad, comp, cost, maxg, maxh


def solve_nlp(fun, eq, ineq, hess, x0, opts: IPMOptions | None = None) -> IPMResult:
    """Run the interior-point iteration.

    ``fun(x) -> (f, df)``; ``eq(x) -> (g, Jg)``; ``ineq(x) -> (h, Jh)`` with
    dense row Jacobians; ``hess(x, lam, mu) -> Lxx`` is the Hessian of the
    Lagrangian ``f + lam'g + mu'h``.
    """
    o = opts or IPMOptions()
    x = np.array(x0, dtype=float)
    nx = x.size
    f, df = fun(x)
    g, Jg = eq(x)
    h, Jh = ineq(x)
    neq, niq = g.size, h.size

    z = np.full(niq, o.z0)
    k = h < -o.z0
    z[k] = -h[k]
    gamma = 1.0
    mu = gamma / z
    lam = np.zeros(neq)
    e = np.ones(niq)

    Lx = df + Jg.T @ lam + Jh.T @ mu
    feas, grad, comp, cost, maxg, maxh = _conditions(x, z, lam, mu, f, f, g, h, Lx)

    def result(ok, it, msg):
        return IPMResult(x, lam, mu, z, float(f), ok, it, msg, feas, grad, comp, maxg, maxh)

    if feas < o.feastol and grad < o.gradtol and comp < o.comptol:
        return result(True, 0, "converged")

    for it in range(1, o.max_iter + 1):
        Lxx = hess(x, lam, mu)
        zinv = 1.0 / z
        JhTz = Jh.T * zinv
        M = Lxx + (JhTz * mu) @ Jh
        N = Lx + JhTz @ (mu * h + gamma * e)
        K = np.zeros((nx + neq, nx + neq))
        K[:nx, :nx] = M
        K[:nx, nx:] = Jg.T
        K[nx:, :nx] = Jg
        rhs = np.concatenate([-N, -g])
        d = None
        for reg in (o.reg, 1e-8, 1e-6):
            K[np.arange(nx), np.arange(nx)] = M.diagonal() + reg
            if neq:
                K[nx + np.arange(neq), nx + np.arange(neq)] = -reg
            try:
                d = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            if np.isfinite(d).all():
                break
            d = None
        if d is None:
            return result(False, it, "numerically failed: singular KKT system")
        dx, dlam = d[:nx], d[nx:]
        dz = -h - z - Jh @ dx
        dmu = -mu + zinv * (gamma * e - mu * dz)

        neg = dz < 0
        alphap = min(o.xi * float(np.min(z[neg] / -dz[neg])), 1.0) if neg.any() else 1.0
        neg = dmu < 0
        alphad = min(o.xi * float(np.min(mu[neg] / -dmu[neg])), 1.0) if neg.any() else 1.0

        x = x + alphap * dx
        z = z + alphap * dz
        lam = lam + alphad * dlam
        mu = mu + alphad * dmu
        if niq:
            gamma = o.sigma * float(z @ mu) / niq

        f0 = f
        f, df = fun(x)
        g, Jg = eq(x)
        h, Jh = ineq(x)
        Lx = df + Jg.T @ lam + Jh.T @ mu
        feas, grad, comp, cost, maxg, maxh = _conditions(x, z, lam, mu, f, f0, g, h, Lx)

        if feas < o.feastol and grad < o.gradtol and comp < o.comptol and cost < o.costtol:
            return result(True, it, "converged")
        if (not np.isfinite(x).all() or not np.isfinite(f) or alphap < o.alpha_min
                or alphad < o.alpha_min or gamma < np.finfo(float).eps or gamma > 1e12):
            return result(False, it, "numerically failed")
    return result(False, o.max_iter, "iteration limit reached")
