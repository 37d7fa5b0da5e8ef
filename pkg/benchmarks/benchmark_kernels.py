#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy twins.

Runs each hot kernel on identical inputs through both backends, reports
mean wall time and speedup, and verifies the outputs agree bit for bit.

Usage:
    python benchmarks/benchmark_kernels.py [--events N] [--pixels N] [--repeats N]
"""

import argparse
import json
import time

import numpy as np

from evlign import kernels


def make_events(rng, n_events, width, height):
    t = np.sort(rng.integers(0, 1_000_000, n_events)).astype(np.int64)
    x = rng.integers(0, width, n_events).astype(np.int32)
    y = rng.integers(0, height, n_events).astype(np.int32)
    p = rng.choice(np.array([-1, 1], np.int8), n_events)
    return t, x, y, p


def timeit(fn, args, repeats, mutated=None):
    """Mean seconds per call; `mutated` maps arg index -> pristine copy to
    restore between calls (the simulator kernel advances its state arg)."""
    fn(*args)  # warmup (includes JIT compile on the numba path)
    if mutated:
        for idx, pristine in mutated.items():
            args[idx][:] = pristine
    total = 0.0
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        total += time.perf_counter() - start
        if mutated:
            for idx, pristine in mutated.items():
                args[idx][:] = pristine
    return total / repeats


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--events", type=int, default=200_000)
    parser.add_argument("--pixels", type=int, default=346 * 260)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--json", default=None, help="optional results file")
    args = parser.parse_args()

    if "numba" not in kernels.BACKENDS:
        raise SystemExit("numba backend unavailable; nothing to compare")

    rng = np.random.default_rng(0)
    width, height = 346, 260
    t, x, y, p = make_events(rng, args.events, width, height)
    span = float(t[-1] - t[0])
    tstar = 4.0 * (t - t[0]).astype(np.float64) / span

    n_px = args.pixels
    la = rng.uniform(-5.0, -0.5, n_px)
    lb = la + rng.uniform(-1.5, 1.5, n_px)
    base = la.copy()
    nref = np.zeros(n_px, np.int64)

    cases = {
        "frame_counts": ([x, y, p, height, width], None),
        "voxel_accumulate": ([tstar, x, y, p, 5, height, width], None),
        "last_timestamps": ([t, x, y, p, height, width], None),
        "segment_crossings": ([la, lb, base, nref, 0.0, 40_000.0, 0.2],
                              {3: nref.copy()}),
    }

    print(f"{args.events} events, {n_px} simulator pixels, "
          f"{args.repeats} repeats per kernel\n")
    print(f"{'kernel':<20} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}  agree")
    results = {}
    for name, (case_args, mutated) in cases.items():
        out_np = kernels.BACKENDS["numpy"][name](*[a.copy() if isinstance(a, np.ndarray) else a
                                                   for a in case_args])
        out_nb = kernels.BACKENDS["numba"][name](*[a.copy() if isinstance(a, np.ndarray) else a
                                                   for a in case_args])
        if isinstance(out_np, tuple):
            agree = all(np.array_equal(a, b) for a, b in zip(out_np, out_nb))
        else:
            agree = np.array_equal(out_np, out_nb)

        t_np = timeit(kernels.BACKENDS["numpy"][name], case_args, args.repeats, mutated)
        t_nb = timeit(kernels.BACKENDS["numba"][name], case_args, args.repeats, mutated)
        results[name] = {"numpy_s": t_np, "numba_s": t_nb,
                         "speedup": t_np / t_nb, "agree": bool(agree)}
        print(f"{name:<20} {t_np * 1e3:>12.3f} {t_nb * 1e3:>12.3f} "
              f"{t_np / t_nb:>8.2f}x  {'yes' if agree else 'NO'}")
        if not agree:
            raise SystemExit(f"backend outputs differ for {name}")

    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
        print(f"\nresults written to {args.json}")


if __name__ == "__main__":
    main()
