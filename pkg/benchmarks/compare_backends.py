"""Time the numba kernels against the pure-numpy mirrors on one workload.

Both backends must return identical rows and identical work counters; this
script asserts that before printing timings, so it doubles as a coarse
parity check on realistic sizes. Wall clock is the only thing allowed to
differ.

Usage:
    python3 benchmarks/compare_backends.py --keys 20 --lookups 16 --seed 7
    python3 benchmarks/compare_backends.py --kind range --range-hits 64
"""

import argparse
import time

import numpy as np

from rxindex.backend import numba_available, set_backend
from rxindex.index import build_index
from rxindex.workloads import KeySpec, LookupSpec, gen_keys, gen_lookups


def run_one(backend, keys, lookups, repeats):
    set_backend(backend)
    t0 = time.perf_counter()
    index = build_index(keys)
    build_s = time.perf_counter() - t0

    def cast():
        if lookups.ndim == 2:
            return index.range_lookup_batch(lookups[:, 0], lookups[:, 1])
        return index.point_lookup_batch(lookups)

    res = cast()  # warm call pays any compile cost
    best = min(_timed(cast) for _ in range(repeats))
    snapshot = (res.offsets.tobytes(), res.rows.tobytes(),
                tuple(sorted(res.totals().items())))
    return build_s, best, snapshot, res


def _timed(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--keys", type=int, default=18, help="log2 of key count")
    ap.add_argument("--lookups", type=int, default=14, help="log2 of lookup count")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--pattern", default="dense",
                    choices=("dense", "strided", "uniform32", "uniform64", "zipf"))
    ap.add_argument("--kind", default="point", choices=("point", "range"))
    ap.add_argument("--range-hits", type=int, default=16)
    ap.add_argument("--hit-rate", type=float, default=1.0)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    if not numba_available():
        raise SystemExit("numba is not importable; nothing to compare")

    keys, _ = gen_keys(KeySpec(count=1 << args.keys, seed=args.seed,
                               pattern=args.pattern))
    lookups = gen_lookups(
        LookupSpec(count=1 << args.lookups, seed=args.seed, kind=args.kind,
                   range_hits=args.range_hits, hit_rate=args.hit_rate),
        keys,
    )

    results = {}
    for backend in ("numba", "numpy"):
        results[backend] = run_one(backend, keys, lookups, args.repeats)

    ja, jb = results["numba"][2], results["numpy"][2]
    assert ja == jb, "backends disagree on rows or counters"

    res = results["numba"][3]
    print(f"{keys.size} keys ({args.pattern}), {lookups.shape[0]} {args.kind} "
          f"lookups, {int(res.hit_counts.sum())} hits")
    print(f"counters: {res.totals()}")
    print(f"{'backend':8} {'build':>9} {'lookup':>9} {'per-query':>11}")
    for backend in ("numba", "numpy"):
        build_s, best, _, _ = results[backend]
        per = best / lookups.shape[0] * 1e6
        print(f"{backend:8} {build_s:8.3f}s {best:8.3f}s {per:9.2f}us")
    speedup = results["numpy"][1] / results["numba"][1]
    print(f"numba is {speedup:.1f}x faster on lookups (identical answers)")


if __name__ == "__main__":
    main()
