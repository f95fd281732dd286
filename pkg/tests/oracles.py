"""Independent reference implementations used as test oracles.

They share no code with the package beyond the network data classes: the
admittance matrix is accumulated element by element from the raw documents,
the power flow is plain Gauss-Seidel, and the redispatch oracle is an
exhaustive grid search.
"""
import math

import numpy as np

S_BASE = 100.0


def naive_ybus(doc):
    """Bus admittance matrix (p.u.) built straight from a network document."""
    s_base = doc.get("s_base_mva", S_BASE)
    f_hz = doc.get("f_hz", 50.0)
    ids = [b["id"] for b in doc["buses"]]
    vn = {b["id"]: b["vn_kv"] for b in doc["buses"]}
    pos = {b: k for k, b in enumerate(ids)}
    n = len(ids)
    Y = [[0j] * n for _ in range(n)]

    def stamp(i, j, y, ysh_i, ysh_j):
        a, b = pos[i], pos[j]
        Y[a][a] += y + ysh_i
        Y[b][b] += y + ysh_j
        Y[a][b] -= y
        Y[b][a] -= y

    for ln in doc.get("lines", []):
        if not ln.get("in_service", True):
            continue
        zb = vn[ln["from_bus"]] ** 2 / s_base
        z = complex(ln["r_ohm_per_km"], ln["x_ohm_per_km"]) * ln["length_km"] / zb
        b = 2 * math.pi * f_hz * ln["c_nf_per_km"] * 1e-9 * ln["length_km"] * zb
        stamp(ln["from_bus"], ln["to_bus"], 1 / z, 0.5j * b, 0.5j * b)
    for tr in doc.get("transformers", []):
        if not tr.get("in_service", True):
            continue
        zmag = tr["vk_percent"] / 100 * s_base / tr["sn_mva"]
        r = tr["vkr_percent"] / 100 * s_base / tr["sn_mva"]
        x = math.sqrt(zmag ** 2 - r ** 2)
        z = complex(r, x) * (tr["vn_hv_kv"] / vn[tr["hv_bus"]]) ** 2
        stamp(tr["hv_bus"], tr["lv_bus"], 1 / z, 0j, 0j)
    for sh in doc.get("shunts", []):
        if sh.get("in_service", True):
            k = pos[sh["bus"]]
            Y[k][k] += complex(sh.get("p_mw", 0.0), -sh["q_mvar"]) / s_base
    return np.array(Y, dtype=complex)


def gauss_seidel(Y, slack, v_slack, s_spec, tol=1e-13, max_iter=200_000):
    """Classic Gauss-Seidel on PQ buses. ``s_spec`` is the net injection (p.u.)."""
    n = Y.shape[0]
    V = np.ones(n, dtype=complex)
    V[slack] = v_slack
    Y = Y.tolist()
    s = list(np.asarray(s_spec, dtype=complex))
    V = V.tolist()
    for it in range(max_iter):
        worst = 0.0
        for i in range(n):
            if i == slack:
                continue
            acc = s[i].conjugate() / V[i].conjugate()
            row = Y[i]
            for j in range(n):
                if j != i:
                    acc -= row[j] * V[j]
            new = acc / row[i]
            worst = max(worst, abs(new - V[i]))
            V[i] = new
        if worst < tol:
            return np.array(V), it + 1
    raise RuntimeError("Gauss-Seidel did not converge")


def random_network_doc(seed, max_buses=6):
    """Small meshed 20 kV network with random parameters, light load."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_buses + 1))
    buses = [{"id": 0, "name": "B0", "vn_kv": 20.0, "kind": "slack"}]
    buses += [{"id": k, "name": f"B{k}", "vn_kv": 20.0, "kind": "pq"} for k in range(1, n)]
    lines = []
    for k in range(1, n):
        lines.append(_rand_line(rng, len(lines), int(rng.integers(0, k)), k))
    if n >= 3 and rng.random() < 0.6:
        a, b = sorted(rng.choice(n, 2, replace=False).tolist())
        lines.append(_rand_line(rng, len(lines), a, b))
    loads = [{"id": k - 1, "bus": k} for k in range(1, n)]
    gens = [{"id": k - 1, "bus": k, "p_hist_max_mw": 3.0} for k in range(1, n)]
    shunts = []
    if n >= 2 and rng.random() < 0.5:
        shunts.append({"id": 0, "bus": int(rng.integers(1, n)),
                       "q_mvar": float(rng.uniform(-0.5, 0.5)), "p_mw": 0.0})
    doc = {"buses": buses, "lines": lines, "transformers": [], "shunts": shunts,
           "generators": gens, "loads": loads,
           "ext_grid": {"bus": 0, "vm_pu": float(rng.uniform(0.98, 1.04))},
           "s_base_mva": 100.0, "f_hz": 50.0}
    inj = {
        "load_p": rng.uniform(0.0, 1.5, n - 1),
        "load_q": rng.uniform(-0.2, 0.6, n - 1),
        "gen_p": rng.uniform(0.0, 1.0, n - 1),
        "gen_q": rng.uniform(-0.1, 0.2, n - 1),
    }
    return doc, inj


def _rand_line(rng, lid, a, b):
    return {"id": lid, "from_bus": a, "to_bus": b,
            "r_ohm_per_km": float(rng.uniform(0.1, 0.5)),
            "x_ohm_per_km": float(rng.uniform(0.1, 0.45)),
            "c_nf_per_km": float(rng.uniform(0.0, 300.0)),
            "length_km": float(rng.uniform(0.5, 4.0)),
            "max_i_ka": 0.4}


def net_injection(doc, inj):
    """Per-bus net injection S = (P_gen - P_load) + j(Q_gen - Q_load), p.u."""
    ids = [b["id"] for b in doc["buses"]]
    pos = {b: k for k, b in enumerate(ids)}
    s = np.zeros(len(ids), dtype=complex)
    for k, g in enumerate(doc["generators"]):
        s[pos[g["bus"]]] += complex(inj["gen_p"][k], inj["gen_q"][k]) / S_BASE
    for k, ld in enumerate(doc["loads"]):
        s[pos[ld["bus"]]] -= complex(inj["load_p"][k], inj["load_q"][k]) / S_BASE
    return s


def grid_search_redispatch(problem_fn, axes):
    """Exhaustive search: ``problem_fn(grid) -> (objective, feasible)`` on a meshgrid."""
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    f, ok = problem_fn(pts)
    if not ok.any():
        return None, math.inf
    k = int(np.argmin(np.where(ok, f, np.inf)))
    return pts[k], float(f[k])


# --------------------------------------------------------------------------
# 3-bus engineered overvoltage instance for the redispatch oracle

def three_bus_overvoltage_doc():
    """Radial 20 kV feeder: slack - bus 1 - bus 2, a generator and a load on 1 and 2.

    A 10 MVA system base makes a 0.01 p.u. grid step 0.1 MW.
    """
    line = dict(r_ohm_per_km=0.30, x_ohm_per_km=0.35, c_nf_per_km=10.0, max_i_ka=0.6)
    return {
        "buses": [{"id": 0, "name": "GRID", "vn_kv": 20.0, "kind": "slack"},
                  {"id": 1, "name": "MID", "vn_kv": 20.0, "kind": "pq"},
                  {"id": 2, "name": "END", "vn_kv": 20.0, "kind": "pq"}],
        "lines": [{"id": 0, "from_bus": 0, "to_bus": 1, "length_km": 4.0, **line},
                  {"id": 1, "from_bus": 1, "to_bus": 2, "length_km": 6.0, **line}],
        "transformers": [], "shunts": [],
        "generators": [{"id": 0, "bus": 1, "p_hist_max_mw": 10.0},
                       {"id": 1, "bus": 2, "p_hist_max_mw": 10.0}],
        "loads": [{"id": 0, "bus": 1}, {"id": 1, "bus": 2}],
        "ext_grid": {"bus": 0, "vm_pu": 1.03},
        "s_base_mva": 10.0, "f_hz": 50.0,
    }


THREE_BUS_POINT = {"load_p": [1.0, 0.5], "load_q": [0.3, 0.1],
                   "gen_p": [2.0, 6.0], "gen_q": [0.2, 0.6]}


def _ybus_state_mismatch(Y, vm, va, p, q):
    V = vm * np.exp(1j * va)
    s = V * np.conj(V @ Y.T)
    return s.real - p, s.imag - q


def fixed_import_flow(doc, load_p, load_q, p1, q1, q2, p_ext, tol=1e-11, max_iter=40):
    """Batched 3-bus flow with the slack import pinned and generator 2's P free.

    Unknowns per case: angle and magnitude at buses 1 and 2. Equations: P at
    the slack equal to ``p_ext``, P and Q at bus 1, Q at bus 2. Generator 2's
    output is then read off the bus-2 active balance. All powers in MW/MVAr.
    Returns (vm, va, p2, converged).
    """
    sb = doc["s_base_mva"]
    Y = naive_ybus(doc)
    v0 = doc["ext_grid"]["vm_pu"]
    n = np.size(p1)
    p1, q1, q2 = (np.broadcast_to(np.asarray(a, float), (n,)) / sb for a in (p1, q1, q2))
    lp = np.asarray(load_p, float) / sb
    lq = np.asarray(load_q, float) / sb
    pe = p_ext / sb
    x = np.tile([0.0, 0.0, 1.0, 1.0], (n, 1))  # va1, va2, vm1, vm2

    def resid(x):
        vm = np.column_stack([np.full(n, v0), x[:, 2], x[:, 3]])
        va = np.column_stack([np.zeros(n), x[:, 0], x[:, 1]])
        V = vm * np.exp(1j * va)
        s = V * np.conj(V @ Y.T)
        return np.column_stack([s[:, 0].real - pe, s[:, 1].real - (p1 - lp[0]),
                                s[:, 1].imag - (q1 - lq[0]), s[:, 2].imag - (q2 - lq[1])]), s

    ok = np.zeros(n, bool)
    for _ in range(max_iter):
        r, s = resid(x)
        ok = np.abs(r).max(axis=1) < tol
        if ok.all():
            break
        J = np.empty((n, 4, 4))
        h = 1e-7
        for k in range(4):
            xp = x.copy()
            xp[:, k] += h
            J[:, :, k] = (resid(xp)[0] - r) / h
        x = x - np.linalg.solve(J, r[..., None])[..., 0]
    r, s = resid(x)
    ok = np.abs(r).max(axis=1) < tol
    vm = np.column_stack([np.full(n, v0), x[:, 2], x[:, 3]])
    va = np.column_stack([np.zeros(n), x[:, 0], x[:, 1]])
    p2 = (s[:, 2].real + lp[1]) * sb
    return vm, va, p2, ok


def three_bus_grid_search(doc, point, p_ext, box, step_mw, w_p=10.0, w_q=1.0, v_max=1.05,
                          v_min=0.95, loading_max=0.9, pf_min=0.95, p_frac=0.85):
    """Exhaustive search over (P1, Q1, Q2) on a regular grid inside ``box``.

    ``box`` is ((p1_lo, p1_hi), (q1_lo, q1_hi), (q2_lo, q2_hi)) in MW/MVAr.
    For each grid point generator 2's P follows from the pinned import; the
    point is kept if every constraint of the redispatch problem holds.
    Returns (best objective, best (P1, Q1, P2, Q2), number of feasible points).
    """
    axes = [np.arange(lo, hi + 0.5 * step_mw, step_mw) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    p1, q1, q2 = (m.ravel() for m in mesh)
    vm, va, p2, ok = fixed_import_flow(doc, point["load_p"], point["load_q"], p1, q1, q2, p_ext)
    sb = doc["s_base_mva"]
    k = math.tan(math.acos(pf_min))
    hist = [g["p_hist_max_mw"] for g in doc["generators"]]
    feas = ok & (vm.max(axis=1) <= v_max) & (vm.min(axis=1) >= v_min)
    feas &= (np.abs(q1) <= k * np.abs(p1)) & (np.abs(q2) <= k * np.abs(p2))
    feas &= (np.abs(p1) <= p_frac * hist[0]) & (np.abs(p2) <= p_frac * hist[1])
    Y = naive_ybus(doc)
    V = vm * np.exp(1j * va)
    for ln in doc["lines"]:
        a, b = ln["from_bus"], ln["to_bus"]
        i_pu = np.abs(Y[a, b]) * np.abs(V[:, a] - V[:, b])
        i_base_ka = sb / (math.sqrt(3) * doc["buses"][a]["vn_kv"])
        feas &= i_pu * i_base_ka <= loading_max * ln["max_i_ka"]
    f = (w_p * ((p1 - point["gen_p"][0]) ** 2 + (p2 - point["gen_p"][1]) ** 2)
         + w_q * ((q1 - point["gen_q"][0]) ** 2 + (q2 - point["gen_q"][1]) ** 2))
    if not feas.any():
        return math.inf, None, 0
    j = int(np.argmin(np.where(feas, f, np.inf)))
    return float(f[j]), (p1[j], q1[j], p2[j], q2[j]), int(feas.sum())
