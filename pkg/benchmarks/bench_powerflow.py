"""Batch Newton-Raphson throughput: numba kernel vs numpy kernel.

    python benchmarks/bench_powerflow.py [--days 30] [--repeat 3]

Both kernels solve the same operating points of the synthetic fixture from a
flat start; the script reports flows per second and the largest voltage
difference between the two backends.
"""
import argparse
import time

import numpy as np

from gridtwin.ingestion import reconstruct_reactive
from gridtwin.network import compile_network, load_network
from gridtwin.powerflow import bus_injections, kernels
from gridtwin.synthetic import mini_bornholm_network, substation_profiles


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--days", type=int, default=30)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    c = compile_network(load_network(mini_bornholm_network()))
    _, gen, load = substation_profiles(args.days)
    p, q = bus_injections(c, load, reconstruct_reactive(load, "load"),
                          gen, reconstruct_reactive(gen, "generation"))
    T = p.shape[0]
    vm0 = np.ones((T, c.n_bus))
    vm0[:, c.slack] = c.vm_slack
    va0 = np.zeros((T, c.n_bus))
    G, B = np.ascontiguousarray(c.Y.real), np.ascontiguousarray(c.Y.imag)
    order = c.pq_order

    results = {}
    for name, fn in (("numba", kernels.newton_batch_numba), ("numpy", kernels.newton_batch_numpy)):
        fn(G, B, p[:2], q[:2], vm0[:2], va0[:2], order, 1e-8, 30)  # compile / warm up
        best = np.inf
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            out = fn(G, B, p, q, vm0, va0, order, 1e-8, 30)
            best = min(best, time.perf_counter() - t0)
        results[name] = out
        print(f"{name:6s} {T} flows  best {best:.3f} s  {T / best:10.0f} flows/s  "
              f"{1e6 * best / T:7.1f} us/flow  iterations {np.bincount(out[2]).nonzero()[0].tolist()}")
    dv = np.max(np.abs(results["numba"][0] - results["numpy"][0]))
    da = np.max(np.abs(results["numba"][1] - results["numpy"][1]))
    print(f"max |dV| between backends {dv:.2e} p.u., max |dtheta| {da:.2e} rad")


if __name__ == "__main__":
    main()
