#!/usr/bin/env python3
"""Time the numba kernels against the pure-numpy fallback.

Both engines produce the same numbers (checked here before timing), so the
comparison is purely about speed.  The first numba call is a warm-up and is
reported separately as compile/load time.

Usage:
    python benchmarks/bench_kernels.py [--replicas M] [--u U] [--repeat R]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from coalesce_lab import pfaffian as pf
from coalesce_lab import simulator as sim
from coalesce_lab._accel import HAVE_NUMBA
from coalesce_lab.analytic import FlowParams
from coalesce_lab.simulator import Backend, SimConfig


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def check_equal(a, b, what: str) -> None:
    if isinstance(a, sim.BatchResult):
        same = np.array_equal(a.nu, b.nu) and np.array_equal(a.block_counts, b.block_counts)
    else:
        # elimination order differs, so cancelling matrices agree only to rounding
        same = np.allclose(a, b, rtol=1e-9, atol=0)
    if not same:
        raise SystemExit(f"{what}: engines disagree")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replicas", type=int, default=4)
    ap.add_argument("--u", type=float, default=1.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    cases = {
        "RandomWalk batch": lambda eng: sim.simulate_batch(
            SimConfig.with_defaults(args.u, 1.0), args.replicas, engine=eng),
        "GaussBridge batch": lambda eng: sim.simulate_batch(
            SimConfig.with_defaults(args.u, 1.0, Backend.GAUSS_BRIDGE, dt=1e-4), args.replicas, engine=eng),
        "Pfaffian batch 12x12": lambda eng: pf.pfaffian_batch(mats, engine=eng),
        "factorial moment k=3": lambda eng: pf.factorial_moment(3, FlowParams(0.1, 1.0), engine=eng).value,
    }
    rng = np.random.default_rng(0)
    a = rng.standard_normal((20_000, 12, 12))
    mats = a - a.transpose(0, 2, 1)

    print(f"{'kernel':<24}{'numpy s':>10}{'numba s':>10}{'speedup':>9}{'warm-up s':>11}")
    for name, fn in cases.items():
        start = time.perf_counter()
        ref_nb = fn("numba")
        warm = time.perf_counter() - start
        check_equal(ref_nb, fn("numpy"), name)
        t_np = best_of(lambda: fn("numpy"), args.repeat)
        t_nb = best_of(lambda: fn("numba"), args.repeat)
        print(f"{name:<24}{t_np:>10.3f}{t_nb:>10.3f}{t_np / t_nb:>9.1f}{warm:>11.2f}")


if __name__ == "__main__":
    main()
