import copy
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import two_bus_doc
from gridtwin.network import (BranchRef, DegenerateTopologyError, NetworkError, apply_outage,
                              build_admittance, compile_network, load_network)
from gridtwin.synthetic import fixture_network_path, mini_bornholm_network
from oracles import naive_ybus, random_network_doc


def test_minimal_two_bus(two_bus):
    net = load_network(two_bus)
    assert len(net.buses) == 2 and len(net.lines) == 1
    assert net.slack_bus.id == 0


def test_load_from_path_and_text(tmp_path, two_bus):
    p = tmp_path / "n.json"
    p.write_text(json.dumps(two_bus))
    assert load_network(p) == load_network(str(p)) == load_network(two_bus)


def test_dangling_reference(two_bus):
    two_bus["loads"][0]["bus"] = 99
    with pytest.raises(NetworkError, match="dangling reference"):
        load_network(two_bus)


@pytest.mark.parametrize("mutate, match", [
    (lambda d: d["buses"][1].update(kind="slack"), "slack"),
    (lambda d: d["buses"][0].update(kind="pq"), "slack"),
    (lambda d: d["lines"][0].update(length_km=0.0), "length_km"),
    (lambda d: d["lines"][0].update(max_i_ka=-1.0), "max_i_ka"),
    (lambda d: d["lines"][0].update(to_bus=0), "from_bus"),
    (lambda d: d["buses"][0].update(vn_kv=0), "vn_kv"),
    (lambda d: d["ext_grid"].update(vm_pu=1.2), "vm_pu"),
    (lambda d: d["ext_grid"].update(bus=1), "slack"),
    (lambda d: d["generators"][0].update(p_hist_max_mw=-1), "p_hist_max_mw"),
    (lambda d: d["buses"].append(dict(d["buses"][1])), "duplicate bus id"),
    (lambda d: d.pop("lines"), "lines"),
    (lambda d: d["lines"][0].update(r_ohm_per_km="a"), "schema"),
])
def test_validation_errors(two_bus, mutate, match):
    mutate(two_bus)
    with pytest.raises(NetworkError, match=match):
        load_network(two_bus)


def test_transformer_validation():
    d = mini_bornholm_network()
    d["transformers"][0]["vkr_percent"] = d["transformers"][0]["vk_percent"] + 1
    with pytest.raises(NetworkError, match="vkr_percent"):
        load_network(d)
    d = mini_bornholm_network()
    d["transformers"][0]["sn_mva"] = 0
    with pytest.raises(NetworkError, match="ratings must be positive"):
        load_network(d)


def test_disconnected_network_rejected(two_bus):
    two_bus["buses"].append({"id": 2, "name": "C", "vn_kv": 60.0, "kind": "pq"})
    with pytest.raises(NetworkError, match="connected"):
        load_network(two_bus)


def test_fixture_counts(fixture_net):
    assert len(fixture_net.lines) == 23
    assert len(fixture_net.transformers) == 16
    assert len(fixture_net.branch_refs()) == 39
    assert len(fixture_net.generators) == len(fixture_net.loads) == 16
    assert len(fixture_net.shunts) == 2
    # one reactor (positive q) and one capacitor (negative q)
    assert sorted(np.sign([s.q_mvar for s in fixture_net.shunts])) == [-1, 1]


def test_shipped_fixture_matches_generator():
    assert json.loads(fixture_network_path().read_text()) == mini_bornholm_network()


def test_round_trip_to_dict(fixture_net):
    assert load_network(fixture_net.to_dict()) == fixture_net


def test_empty_admittance():
    d = two_bus_doc()
    d["lines"][0]["in_service"] = False
    d["buses"] = d["buses"][:1]
    d["generators"], d["loads"], d["lines"] = [], [], []
    Y = build_admittance(load_network(d)).Y
    assert Y.shape == (1, 1) and np.all(Y == 0)


def test_single_line_hand_value():
    d = two_bus_doc()
    d["lines"][0].update(r_ohm_per_km=0.0, x_ohm_per_km=10.0, length_km=1.0, c_nf_per_km=0.0)
    Y = build_admittance(load_network(d)).Y
    # z_base = 60^2 / 100 = 36 ohm; y = 1 / (j 10/36)
    assert Y[0, 1] == pytest.approx(3.6j, abs=1e-12)
    assert Y[0, 0] == pytest.approx(-3.6j, abs=1e-12)


def test_transformer_impedance_hand_value():
    d = mini_bornholm_network()
    tr = d["transformers"][0]
    tr.update(sn_mva=25.0, vk_percent=12.0, vkr_percent=0.5)
    net = load_network(d)
    c = compile_network(net)
    k = c.branch_refs.index(BranchRef("trafo", tr["id"]))
    assert abs(1.0 / c.y_series[k]) == pytest.approx(0.48, rel=1e-12)
    assert (1.0 / c.y_series[k]).real == pytest.approx(0.005 * 4, rel=1e-12)


def test_shunt_admittance_sign():
    d = two_bus_doc()
    d["shunts"] = [{"id": 0, "bus": 1, "q_mvar": 5.0, "p_mw": 1.0}]
    Y0 = build_admittance(load_network(two_bus_doc())).Y
    Y = build_admittance(load_network(d)).Y
    assert Y[1, 1] - Y0[1, 1] == pytest.approx(complex(1.0, -5.0) / 100.0)


def test_fixture_admittance_symmetric_and_row_sums(fixture_doc, fixture_compiled):
    Y = fixture_compiled.Y
    assert np.isfinite(Y).all()
    np.testing.assert_allclose(Y, Y.T, atol=0)
    # row sums equal the total shunt admittance at each bus
    np.testing.assert_allclose(Y.sum(axis=1), naive_ybus(fixture_doc).sum(axis=1), atol=1e-10)
    np.testing.assert_allclose(Y, naive_ybus(fixture_doc), atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_admittance_matches_naive_oracle(seed):
    doc, _ = random_network_doc(seed)
    Y = build_admittance(load_network(doc)).Y
    np.testing.assert_allclose(Y, naive_ybus(doc), rtol=1e-12, atol=1e-12)
    np.testing.assert_array_equal(Y, Y.T)


def test_kirchhoff_stamp_per_branch():
    doc, _ = random_network_doc(3)
    for ln in doc["lines"]:
        ln["c_nf_per_km"] = 0.0
    doc["shunts"] = []
    c = compile_network(load_network(doc))
    Y = np.zeros_like(c.Y)
    for f, t, y in zip(c.f, c.t, c.y_series):
        Y[f, f] += y
        Y[t, t] += y
        Y[f, t] -= y
        Y[t, f] -= y
    np.testing.assert_allclose(c.Y, Y, atol=1e-12)


def test_zero_impedance_branch_rejected(two_bus):
    two_bus["lines"][0].update(r_ohm_per_km=0.0, x_ohm_per_km=0.0)
    with pytest.raises(NetworkError, match="zero series impedance"):
        build_admittance(load_network(two_bus))


# ---------------------------------------------------------------------------
# outages

def _ring_line(net):
    """A line between two HV buses that sits on a cycle."""
    for ref in net.branch_refs():
        if ref.kind == "line" and ref.id != 0:
            return ref
    raise AssertionError


def test_ring_outage_islands_nothing(fixture_net):
    ref = _ring_line(fixture_net)
    out, isl = apply_outage(fixture_net, ref)
    assert isl == frozenset()
    assert not out.branch(ref).in_service
    assert fixture_net.branch(ref).in_service  # input untouched


def test_spur_transformer_islands_lv_bus(fixture_net):
    tr = fixture_net.transformers[3]
    out, isl = apply_outage(fixture_net, f"trafo:{tr.id}")
    assert isl == frozenset({tr.lv_bus})
    assert all(not g.in_service for g in out.generators if g.bus == tr.lv_bus)
    assert all(not ld.in_service for ld in out.loads if ld.bus == tr.lv_bus)
    assert all(g.in_service for g in out.generators if g.bus != tr.lv_bus)
    c = compile_network(out)
    assert tr.lv_bus not in c.bus_ids.tolist()


def test_only_slack_branch_is_degenerate(two_bus):
    net = load_network(two_bus)
    with pytest.raises(DegenerateTopologyError, match="degenerate case: empty network"):
        apply_outage(net, "line:0")


def test_unknown_element(fixture_net):
    with pytest.raises(NetworkError):
        apply_outage(fixture_net, "line:999")
    with pytest.raises(NetworkError):
        apply_outage(fixture_net, "bus:1")


def test_outage_idempotent(fixture_net):
    for ref in fixture_net.branch_refs():
        try:
            once, isl1 = apply_outage(fixture_net, ref)
        except DegenerateTopologyError:
            continue
        twice, isl2 = apply_outage(once, ref)
        assert isl1 == isl2
        assert once == twice
        assert fixture_net.slack_bus.id not in isl1


def test_pq_order_is_permutation(fixture_compiled):
    assert sorted(fixture_compiled.pq_order.tolist()) == sorted(fixture_compiled.pq.tolist())
