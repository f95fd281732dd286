"""Synthetic mini-Bornholm fixture: 60 kV ring network and a year of feeder data.

The network has one external-grid bus behind a 50 km subsea cable, sixteen
60 kV substation busbars on a ring with six cross-links (23 lines) and one
60/10 kV transformer per substation (16 transformers). Each 10 kV busbar
``S01``..``S16`` carries one equivalent load and one equivalent generator.

Feeder time series are generated from seeded stochastic profiles: demand with
daily, weekly and seasonal shape; island-wide wind through a power curve;
solar by sun elevation and cloud cover; a steady biogas/CHP share.

Run ``python -m gridtwin.synthetic OUTDIR`` to write ``network.json`` and
``measurements.csv``.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
from pathlib import Path

import numpy as np

N_SUB = 16
YEAR = 2025
STEPS_PER_DAY = 96

# (load share of island peak, wind MW, solar MW, chp MW, transformer MVA)
_SUBSTATIONS = [
    (0.12, 2.0, 0.6, 2.0, 37.5),
    (0.05, 4.5, 1.2, 0.0, 24.0),
    (0.06, 1.5, 2.1, 0.0, 24.0),
    (0.08, 0.0, 0.9, 3.0, 24.0),
    (0.05, 3.0, 0.6, 0.0, 15.0),
    (0.04, 4.5, 1.5, 0.0, 24.0),
    (0.07, 1.0, 0.6, 1.5, 24.0),
    (0.09, 0.0, 1.2, 2.5, 30.0),
    (0.05, 2.5, 1.8, 0.0, 15.0),
    (0.04, 5.5, 0.9, 0.0, 24.0),
    (0.06, 1.0, 1.2, 0.0, 15.0),
    (0.07, 0.2, 0.3, 1.0, 15.0),
    (0.06, 2.0, 1.8, 0.0, 24.0),
    (0.05, 1.0, 1.2, 1.0, 15.0),
    (0.06, 1.5, 0.9, 0.0, 24.0),
    (0.05, 0.5, 1.2, 2.0, 15.0),
]
PEAK_LOAD_MW = 55.0

# ring segment lengths (km), H_k -> H_{k+1}
_RING_KM = [8.0, 6.5, 11.0, 7.5, 9.0, 5.5, 10.0, 12.0, 6.0, 7.0, 9.5, 8.5, 6.0, 10.5, 7.5, 9.0]
_CHORDS = [(1, 9, 18.0), (3, 12, 16.0), (5, 14, 14.0), (2, 7, 12.0), (10, 15, 11.0), (4, 16, 17.0)]

_OHL = dict(r_ohm_per_km=0.12, x_ohm_per_km=0.39, c_nf_per_km=9.5, max_i_ka=0.45)
_CABLE = dict(r_ohm_per_km=0.04, x_ohm_per_km=0.10, c_nf_per_km=230.0, max_i_ka=0.58)


def mini_bornholm_network(vm_ext_pu: float = 1.02) -> dict:
    buses = [{"id": 0, "name": "EXT", "vn_kv": 60.0, "kind": "slack"}]
    buses += [{"id": k, "name": f"H{k:02d}", "vn_kv": 60.0, "kind": "pq"} for k in range(1, N_SUB + 1)]
    buses += [{"id": N_SUB + k, "name": f"S{k:02d}", "vn_kv": 10.0, "kind": "pq"}
              for k in range(1, N_SUB + 1)]
    lines = [dict(id=0, from_bus=0, to_bus=1, length_km=50.0, **_CABLE)]
    for k in range(N_SUB):
        a, b = k + 1, (k + 1) % N_SUB + 1
        kind = _CABLE if k % 4 == 1 else _OHL
        lines.append(dict(id=len(lines), from_bus=a, to_bus=b, length_km=_RING_KM[k], **kind))
    for a, b, km in _CHORDS:
        lines.append(dict(id=len(lines), from_bus=a, to_bus=b, length_km=km, **_OHL))
    trafos = [{"id": k - 1, "hv_bus": k, "lv_bus": N_SUB + k, "sn_mva": _SUBSTATIONS[k - 1][4],
               "vk_percent": 11.0, "vkr_percent": 0.6, "vn_hv_kv": 60.0, "vn_lv_kv": 10.0}
              for k in range(1, N_SUB + 1)]
    shunts = [
        {"id": 0, "bus": 1, "q_mvar": 6.0, "p_mw": 0.0},    # reactor at the cable landing
        {"id": 1, "bus": 9, "q_mvar": -3.0, "p_mw": 0.0},   # capacitor bank
    ]
    gens = []
    for k in range(1, N_SUB + 1):
        _, wind, solar, chp, _ = _SUBSTATIONS[k - 1]
        gens.append({"id": k - 1, "bus": N_SUB + k, "p_hist_max_mw": round(wind + solar + chp, 3)})
    loads = [{"id": k - 1, "bus": N_SUB + k} for k in range(1, N_SUB + 1)]
    return {
        "name": "mini-bornholm",
        "s_base_mva": 100.0,
        "f_hz": 50.0,
        "buses": buses,
        "lines": lines,
        "transformers": trafos,
        "shunts": shunts,
        "generators": gens,
        "loads": loads,
        "ext_grid": {"bus": 0, "vm_pu": vm_ext_pu},
    }


def fixture_network_path() -> Path:
    """The shipped copy of :func:`mini_bornholm_network` (default arguments)."""
    return Path(__file__).parent / "data" / "mini_bornholm.json"


def _ar1(rng, n, phi, sigma):
    e = rng.normal(0.0, sigma, n)
    out = np.empty(n)
    acc = 0.0
    for k in range(n):
        acc = phi * acc + e[k]
        out[k] = acc
    return out


def _wind_power(speed):
    cut_in, rated, cut_out = 3.0, 12.5, 25.0
    p = np.clip((speed ** 3 - cut_in ** 3) / (rated ** 3 - cut_in ** 3), 0.0, 1.0)
    p[(speed < cut_in) | (speed > cut_out)] = 0.0
    return p


def substation_profiles(days: int = 365, seed: int = 7, start: str = f"{YEAR}-01-01"):
    """Substation-level generation and demand (MW), shape (T, 16) each."""
    rng = np.random.default_rng(seed)
    T = days * STEPS_PER_DAY
    t0 = np.datetime64(start, "s")
    stamps = t0 + np.arange(T) * np.timedelta64(900, "s")
    hour = (np.arange(T) % STEPS_PER_DAY) / 4.0
    doy = (stamps.astype("datetime64[D]") - stamps.astype("datetime64[Y]")).astype(int)
    weekday = (stamps.astype("datetime64[D]").astype(int) + 3) % 7  # 0 = Monday

    season = 1.0 + 0.22 * np.cos(2 * np.pi * (doy - 15) / 365.0)
    daily = (0.62 + 0.22 * np.exp(-((hour - 8.0) / 2.2) ** 2)
             + 0.38 * np.exp(-((hour - 18.5) / 2.6) ** 2) + 0.10 * np.exp(-((hour - 12.5) / 3.0) ** 2))
    weekly = np.where(weekday >= 5, 0.9, 1.0)
    base_shape = season * daily * weekly
    base_shape = base_shape / base_shape.max()

    shares = np.array([s[0] for s in _SUBSTATIONS])
    load = np.empty((T, N_SUB))
    for k in range(N_SUB):
        noise = 1.0 + _ar1(rng, T, 0.97, 0.012)
        load[:, k] = PEAK_LOAD_MW * shares[k] * base_shape * noise
    load = np.maximum(load, 0.05)

    # island-wide wind: slow AR(1) around a seasonal mean, local gusts on top
    mean_speed = 7.5 + 1.8 * np.cos(2 * np.pi * (doy - 20) / 365.0)
    common = _ar1(rng, T, 0.995, 0.28)
    speed = np.maximum(mean_speed + common, 0.0)
    elev = np.sin(np.pi * (hour - 6.0 + 2.0 * np.cos(2 * np.pi * (doy - 172) / 365.0))
                  / (12.0 + 4.0 * np.cos(2 * np.pi * (doy - 172) / 365.0)))
    sun = np.clip(elev, 0.0, None) * (0.55 + 0.45 * np.cos(2 * np.pi * (doy - 172) / 365.0))
    cloud = np.clip(0.75 + _ar1(rng, T, 0.99, 0.05), 0.15, 1.0)

    gen = np.empty((T, N_SUB))
    for k, (_, wind, solar, chp, _) in enumerate(_SUBSTATIONS):
        local = np.maximum(speed * (1.0 + _ar1(rng, T, 0.9, 0.03)), 0.0)
        chp_run = chp * np.clip(0.55 + 0.25 * np.cos(2 * np.pi * (doy - 15) / 365.0)
                                + _ar1(rng, T, 0.995, 0.01), 0.0, 0.98)
        gen[:, k] = wind * 0.97 * _wind_power(local) + solar * 0.9 * sun * cloud + chp_run
    return stamps, np.maximum(gen, 0.0), load


def write_measurements(path, stamps, gen, load, seed: int = 11, feeders=(2, 1, 3, 2)):
    """Split substation totals over feeders and write the measurement CSV."""
    rng = np.random.default_rng(seed)
    T, n = gen.shape
    plan = []
    for k in range(n):
        nf = feeders[k % len(feeders)]
        wg = rng.dirichlet(np.ones(nf) * 4.0)
        wl = rng.dirichlet(np.ones(nf) * 4.0)
        plan.append((f"S{k + 1:02d}", [f"F{k + 1:02d}{j + 1}" for j in range(nf)], wg, wl))
    labels = np.datetime_as_string(stamps, unit="s")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("timestamp", "substation_id", "feeder_id", "injected_kw", "withdrawn_kw"))
        for t in range(T):
            stamp = labels[t] + "Z"
            for k, (sub, fids, wg, wl) in enumerate(plan):
                g_kw = gen[t, k] * 1000.0
                l_kw = load[t, k] * 1000.0
                for j, fid in enumerate(fids):
                    w.writerow((stamp, sub, fid, f"{g_kw * wg[j]:.3f}", f"{l_kw * wl[j]:.3f}"))


def write_fixture(outdir, days: int = 365, seed: int = 7, vm_ext_pu: float = 1.02):
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "network.json").write_text(json.dumps(mini_bornholm_network(vm_ext_pu), indent=1) + "\n")
    stamps, gen, load = substation_profiles(days, seed)
    write_measurements(out / "measurements.csv", stamps, gen, load)
    return out / "network.json", out / "measurements.csv"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("outdir")
    ap.add_argument("--days", type=int, default=365)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)
    net, meas = write_fixture(args.outdir, args.days, args.seed)
    print(f"wrote {net} and {meas}")


if __name__ == "__main__":
    main()
