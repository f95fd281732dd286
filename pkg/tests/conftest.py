import copy
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gridtwin.network import compile_network, load_network  # noqa: E402
from gridtwin.synthetic import mini_bornholm_network, write_fixture  # noqa: E402


def two_bus_doc(x_pu=0.1, r_pu=0.0, vm=1.0, vn_kv=60.0, s_base=100.0, load_bus=1):
    """Slack plus one PQ bus joined by a lossless-by-default line of given p.u. impedance."""
    zb = vn_kv ** 2 / s_base
    return {
        "buses": [{"id": 0, "name": "A", "vn_kv": vn_kv, "kind": "slack"},
                  {"id": 1, "name": "B", "vn_kv": vn_kv, "kind": "pq"}],
        "lines": [{"id": 0, "from_bus": 0, "to_bus": 1, "r_ohm_per_km": r_pu * zb,
                   "x_ohm_per_km": x_pu * zb, "c_nf_per_km": 0.0, "length_km": 1.0,
                   "max_i_ka": 1.0}],
        "transformers": [], "shunts": [],
        "generators": [{"id": 0, "bus": load_bus, "p_hist_max_mw": 10.0}],
        "loads": [{"id": 0, "bus": load_bus}],
        "ext_grid": {"bus": 0, "vm_pu": vm},
        "s_base_mva": s_base, "f_hz": 50.0,
    }


@pytest.fixture
def two_bus():
    return two_bus_doc()


@pytest.fixture(scope="session")
def fixture_doc():
    return mini_bornholm_network()


@pytest.fixture
def fixture_doc_copy(fixture_doc):
    return copy.deepcopy(fixture_doc)


@pytest.fixture(scope="session")
def fixture_net(fixture_doc):
    return load_network(fixture_doc)


@pytest.fixture(scope="session")
def fixture_compiled(fixture_net):
    return compile_network(fixture_net)


@pytest.fixture(scope="session")
def small_fixture(tmp_path_factory):
    """Three days of synthetic measurements on the shipped network."""
    d = tmp_path_factory.mktemp("fx3")
    net, meas = write_fixture(d, days=3)
    return d, net, meas


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(2024)


def fixture_series(days=2, start_day=0):
    """Synthetic operating series on the fixture (one unit of each kind per substation)."""
    from gridtwin.ingestion import reconstruct_reactive
    from gridtwin.powerflow import OperatingSeries
    from gridtwin.synthetic import substation_profiles
    st_, gen, load = substation_profiles(start_day + days)
    sl = slice(start_day * 96, None)
    return OperatingSeries(st_[sl], load[sl], reconstruct_reactive(load[sl], "load"),
                           gen[sl], reconstruct_reactive(gen[sl], "generation"))


def write_window(outdir, days, start, vm_ext_pu=1.02):
    """Fixture network plus measurements for a window starting at ``start``."""
    import json
    from gridtwin.synthetic import substation_profiles, write_measurements
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stamps, gen, load = substation_profiles(days, start=start)
    meas = outdir / "measurements.csv"
    write_measurements(meas, stamps, gen, load)
    net = outdir / "network.json"
    net.write_text(json.dumps(mini_bornholm_network(vm_ext_pu)))
    return net, meas


@pytest.fixture(scope="session")
def summer_window(tmp_path_factory):
    """Four June days: heavy enough that +20% load produces violations."""
    d = tmp_path_factory.mktemp("june")
    net, meas = write_window(d, 4, "2025-06-10")
    return d, net, meas


@pytest.fixture(scope="session")
def summer_run(summer_window):
    """One full harness run over the June window (all default scenarios)."""
    from gridtwin import harness
    from gridtwin.config import RunConfig
    d, net, meas = summer_window
    cfg = RunConfig(network=net, measurements=meas, out=d / "run")
    out, timings = harness.run(cfg)
    return out, cfg


# acceptance criteria report: tests/test_acceptance.py records one verdict per criterion
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
