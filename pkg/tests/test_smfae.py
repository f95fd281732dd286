import copy
import io
import json
import math

import numpy as np
import pytest

from conftest import fixture_series
from gridtwin import cae
from gridtwin.network import compile_network, load_network
from gridtwin.powerflow import OperatingPoint, solve_power_flow
from gridtwin.rsae import assess
from gridtwin.smfae import (INFEASIBLE, OPTIMAL, SOLVER_FAILURE, RedispatchConfig, RedispatchError,
                            build_problem, solve, verify, write_deltas_csv)
from invariants import assert_invariants
from oracles import THREE_BUS_POINT, three_bus_grid_search, three_bus_overvoltage_doc


@pytest.fixture(scope="module")
def three_bus():
    doc = three_bus_overvoltage_doc()
    c = compile_network(load_network(doc))
    P = THREE_BUS_POINT
    pt = OperatingPoint("2025-06-01T12:00:00Z", P["load_p"], P["load_q"], P["gen_p"], P["gen_q"])
    return doc, c, pt


@pytest.fixture(scope="module")
def three_bus_solved(three_bus):
    doc, c, pt = three_bus
    prob = build_problem(c, pt)
    return prob, solve(prob, point=pt)


def test_three_bus_base_is_overvoltage(three_bus):
    _, c, pt = three_bus
    rep = assess(solve_power_flow(c, pt))
    assert [v.kind for v in rep.violations] == ["overvoltage"]


def test_three_bus_optimal_and_invariants(three_bus_solved):
    prob, s = three_bus_solved
    assert s.status == OPTIMAL
    assert_invariants(s, prob)
    assert s.verification.violations == 0
    assert s.verification.slack_deviation_pu <= 1e-4


def test_three_bus_grid_oracle(three_bus, three_bus_solved):
    doc, c, pt = three_bus
    prob, s = three_bus_solved
    P = THREE_BUS_POINT
    h = 0.01 * doc["s_base_mva"]
    f = s.objective
    # any point cheaper than the solver's lies inside this box around the base
    rp, rq = math.sqrt(f / 10.0) + h, math.sqrt(f / 1.0) + h
    box = ((P["gen_p"][0] - rp, P["gen_p"][0] + rp), (P["gen_q"][0] - rq, P["gen_q"][0] + rq),
           (P["gen_q"][1] - rq, P["gen_q"][1] + rq))
    f_grid, best, n_feas = three_bus_grid_search(doc, P, prob.p_ext_target_mw, box, h)
    assert n_feas > 0
    # resolution bound: largest objective change for one grid step around the grid optimum
    steps = []
    for ax in range(3):
        for sgn in (-1, 1):
            b = [(v, v) for v in (best[0], best[1], best[3])]
            b[ax] = (b[ax][0] + sgn * h,) * 2
            fn, _, ok = three_bus_grid_search(doc, P, prob.p_ext_target_mw, b, h, v_max=np.inf,
                                             v_min=-np.inf, loading_max=np.inf, pf_min=1e-9,
                                             p_frac=np.inf)
            steps.append(abs(fn - f_grid))
    bound = max(steps)
    assert f <= f_grid + 2 * bound
    assert f_grid <= f + 2 * bound


def test_zero_violation_fixed_point():
    series = fixture_series(days=1)
    net = load_network(__import__("gridtwin.synthetic", fromlist=["x"]).mini_bornholm_network())
    c = compile_network(net)
    hist = np.full(16, 50.0)
    pt = series.point(20)
    assert assess(solve_power_flow(c, pt)).secure
    prob = build_problem(c, pt, hist_max_mw=hist)
    s = solve(prob, point=pt)
    assert s.status == OPTIMAL
    assert np.abs(s.dp_mw).max() < 1e-6 and np.abs(s.dq_mvar).max() < 1e-6
    assert s.objective < 1e-10
    assert_invariants(s, prob)


def test_dimensions(fixture_compiled):
    pt = fixture_series(days=1).point(0)
    prob = build_problem(fixture_compiled, pt, hist_max_mw=np.full(16, 50.0))
    assert prob.n_generator_vars == 2 * 16
    assert prob.n_voltage_vars == 2 * fixture_compiled.n_bus


def test_zero_hist_pins_unit(three_bus):
    doc, c, pt = three_bus
    prob = build_problem(c, pt, hist_max_mw=np.array([10.0, 0.0]))
    s = solve(prob, point=pt)
    assert s.p_new_mw[1] == 0.0 and s.q_new_mvar[1] == 0.0
    assert s.status in (OPTIMAL, INFEASIBLE)
    if s.status == OPTIMAL:
        assert_invariants(s, prob)


def test_preventive_islanded_unit_absent(fixture_net):
    series = fixture_series(days=1, start_day=180)
    tr = fixture_net.transformers[4]
    topo = cae.prepare_outage(fixture_net, f"trafo:{tr.id}")
    pt = series.point(48)
    prob = build_problem(topo.compiled, pt, f"preventive:{topo.element}", hist_max_mw=np.full(16, 50.0),
                         islanded_buses=topo.islanded)
    gone = [k for k, g in enumerate(fixture_net.generators) if g.bus == tr.lv_bus]
    assert gone and not set(gone) & set(prob.gens.tolist())
    assert prob.n_generator_vars == 2 * 15
    s = solve(prob, point=pt)
    assert len(s.gen_ids) == 15
    if s.status == OPTIMAL:
        assert_invariants(s, prob)


def test_infeasible_capacity(three_bus):
    doc, c, pt = three_bus
    heavy = OperatingPoint(pt.timestamp, [12.0, 10.0], [1.0, 1.0], pt.gen_p_mw, pt.gen_q_mvar)
    # import pinned at 2 MW while 22 MW of load faces at most 2 x 8.5 MW of generation
    prob = build_problem(c, heavy, p_ext_target_mw=2.0)
    s = solve(prob, point=heavy)
    assert s.status == INFEASIBLE
    assert s.restoration_violation > 1e-6


def test_iteration_cap_is_solver_failure(three_bus):
    doc, c, pt = three_bus
    prob = build_problem(c, pt, config=RedispatchConfig(max_iter=2))
    s = solve(prob, point=pt)
    assert s.status == SOLVER_FAILURE


def test_tampered_schedule_detected(three_bus, three_bus_solved):
    doc, c, pt = three_bus
    prob, s = three_bus_solved
    bad = copy.deepcopy(s)
    bad.q_new_mvar = bad.q_new_mvar.copy()
    bad.q_new_mvar[1] += 0.5
    rec = verify(bad, prob, pt)
    assert not rec.passed
    assert rec.violations > 0 or rec.slack_deviation_pu > 1e-4 or rec.max_pf_slack_mvar > 1e-4
    assert bad.status == SOLVER_FAILURE


def test_weight_scaling_invariance(three_bus, three_bus_solved):
    doc, c, pt = three_bus
    prob, s = three_bus_solved
    s7 = solve(build_problem(c, pt, config=RedispatchConfig(w_p=70.0, w_q=7.0)), point=pt)
    assert s7.status == OPTIMAL
    np.testing.assert_allclose(s7.p_new_mw, s.p_new_mw, atol=1e-5)
    np.testing.assert_allclose(s7.q_new_mvar, s.q_new_mvar, atol=1e-5)
    assert s7.objective == pytest.approx(7 * s.objective, rel=1e-6)


def test_fixture_overvoltage_redispatch(fixture_compiled):
    """Low-load, high-generation points of the fixture: repair by redispatch."""
    from gridtwin.powerflow import compute_branch_results, solve_batch
    from gridtwin.rsae import SecurityLimits, violation_mask
    c = fixture_compiled
    series = fixture_series(days=20, start_day=100).scaled_load(0.8)
    r = solve_batch(c, series.load_p_mw, series.load_q_mvar, series.gen_p_mw, series.gen_q_mvar)
    br = compute_branch_results(c, r.vm, r.va)
    rows = np.flatnonzero(violation_mask(r.vm, br.loading_percent, SecurityLimits())[0])
    assert rows.size
    hist = series.gen_p_mw.max(axis=0) * 1.3
    done = 0
    for k in rows[:: max(1, rows.size // 6)]:
        pt = series.point(k)
        prob = build_problem(c, pt, hist_max_mw=hist, warm_start=(r.vm[k], r.va[k]))
        s = solve(prob, point=pt)
        assert s.status in (OPTIMAL, INFEASIBLE), s.message
        if s.status == OPTIMAL:
            assert_invariants(s, prob)
            assert s.verification.passed
            done += 1
    assert done


def test_problem_errors(three_bus, fixture_doc_copy):
    doc, c, pt = three_bus
    with pytest.raises(RedispatchError, match="historical maximum"):
        build_problem(c, pt, hist_max_mw=np.array([1.0, np.nan]))
    with pytest.raises(RedispatchError, match="historical maximum"):
        build_problem(c, pt, hist_max_mw=np.array([1.0]))
    d = copy.deepcopy(doc)
    d["generators"] = []
    c0 = compile_network(load_network(d))
    with pytest.raises(RedispatchError, match="empty generator set"):
        build_problem(c0, OperatingPoint("t", pt.load_p_mw, pt.load_q_mvar, [], []))
    with pytest.raises(ValueError):
        RedispatchConfig(w_p=0)


def test_serialization(three_bus_solved):
    _, s = three_bus_solved
    d = json.loads(s.to_json())
    assert d["status"] == OPTIMAL and len(d["generators"]) == 2
    g = d["generators"][0]
    assert g["dp_mw"] == pytest.approx(g["p_new_mw"] - g["p_base_mw"])
    assert d["verification"]["violations"] == 0
    buf = io.StringIO()
    write_deltas_csv([s], buf, scenario="x")
    lines = buf.getvalue().splitlines()
    assert lines[0] == "scenario,timestamp,mode,generator,dp_mw,dq_mvar" and len(lines) == 3
