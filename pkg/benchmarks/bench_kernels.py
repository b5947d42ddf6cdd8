"""Compare the numba and pure-python kernel backends.

Run twice, once per backend:

    python3 benchmarks/bench_kernels.py
    MOMAGEN_PURE_NUMPY=1 python3 benchmarks/bench_kernels.py

or pass --both to fork a pure-python child and print the speedup table.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def make_shapes(n, rng):
    kinds = rng.integers(0, 3, size=n)
    params = rng.uniform(0.02, 0.3, size=(n, 3))
    pos = rng.uniform(-2.0, 2.0, size=(n, 3))
    quat = rng.normal(size=(n, 4))
    quat /= np.linalg.norm(quat, axis=1, keepdims=True)
    return kinds, params, pos, quat


def bench(fn, *args, repeat=5):
    fn(*args)  # warm (JIT compile on the numba backend)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def run_suite():
    from momagen import kernels

    rng = np.random.default_rng(0)
    n = 64
    kinds, params, pos, quat = make_shapes(n, rng)
    ii, jj = np.triu_indices(n, k=1)
    pairs = np.stack([ii, jj], axis=1).astype(np.int64)
    out = np.empty(len(pairs))
    margins = np.full(len(pairs), 0.005)

    cam = np.array([0.0, 0.0, 1.5])
    points = rng.uniform(-1.5, 1.5, size=(26, 3))
    skip = np.array([-1], dtype=np.int64)

    results = {
        "backend": "numba" if kernels.NUMBA_ENABLED else "pure",
        "pair_distances_2016": bench(kernels.pair_distances, kinds, params,
                                     pos, quat, pairs, out),
        "first_violation_2016": bench(kernels.first_violation, kinds, params,
                                      pos, quat, pairs, margins),
        "count_unoccluded_26": bench(kernels.count_unoccluded, cam, points,
                                     kinds, params, pos, quat, skip),
    }
    return results


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--both", action="store_true",
                    help="also run the pure-python backend in a child process")
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args()

    res = run_suite()
    if args.json:
        print(json.dumps(res))
        return
    print(f"backend: {res['backend']}")
    for k, v in res.items():
        if k != "backend":
            print(f"  {k:<24} {v * 1e3:9.3f} ms")

    if args.both and res["backend"] == "numba":
        env = {**os.environ, "MOMAGEN_PURE_NUMPY": "1"}
        out = subprocess.run([sys.executable, __file__, "--json"], env=env,
                             capture_output=True, text=True, check=True)
        pure = json.loads(out.stdout)
        print("backend: pure (child process)")
        for k, v in pure.items():
            if k != "backend":
                speedup = v / res[k]
                print(f"  {k:<24} {v * 1e3:9.3f} ms  ({speedup:5.1f}x slower)")


if __name__ == "__main__":
    main()
