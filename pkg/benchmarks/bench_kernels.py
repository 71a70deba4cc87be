"""Benchmark the numba kernels against the pure-numpy fallback.

The backend is fixed at import time by ``SPEEDPLAN_DISABLE_JIT``, so each
backend runs in its own subprocess.  Each child times a handful of
workloads (best of ``--repeat``, after one warm-up call that also absorbs
JIT compilation) and returns timings plus checksums; the parent prints a
table and verifies that both backends produced the same numbers.

    python benchmarks/bench_kernels.py [--repeat 5] [--json]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _workloads():
    from speedplan import _kernels as K
    from speedplan.generators import random_instance
    from speedplan.model import critical_speed
    from speedplan.oracle import dp_optimize
    from speedplan.tightening import compute_zy

    rng = np.random.default_rng(2024)
    long_track = random_instance(rng, 5000)
    short_track = random_instance(rng, 30)
    verdict = compute_zy(short_track)
    p = long_track.vehicle
    args = (long_track.h, p.gamma, p.g * p.mu, p.P_max / p.M, critical_speed(p))
    grade = np.ascontiguousarray(long_track.grade)
    upper = long_track.upper_limits()
    lower = long_track.lower_limits()

    return {
        "sweep_b1 (n=5000)": lambda: K.sweep_b1(lower, grade, *args),
        "sweep_b2 (n=5000)": lambda: K.sweep_b2(upper, grade, *args),
        "sweep_b3 (n=5000)": lambda: K.sweep_b3(lower, grade, *args[:3]),
        "sweep_b4 (n=5000)": lambda: K.sweep_b4(upper, grade, *args[:3]),
        "compute_zy (n=5000)": lambda: np.concatenate(
            [compute_zy(long_track, verify=False).z, compute_zy(long_track, verify=False).y]),
        "dp_optimize (n=30, 1000 levels)": lambda: dp_optimize(
            short_track, 1000, envelopes=verdict).profile,
    }


def child(repeat):
    from speedplan._jit import backend_name

    results = {}
    for name, fn in _workloads().items():
        out = fn()  # warm-up / compilation
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            out = fn()
            best = min(best, time.perf_counter() - t0)
        results[name] = {"seconds": best, "checksum": np.asarray(out, dtype=float).tolist()}
    print(json.dumps({"backend": backend_name(), "results": results}))


def run_backend(disable_jit, repeat):
    env = dict(os.environ)
    env["SPEEDPLAN_DISABLE_JIT"] = "1" if disable_jit else "0"
    proc = subprocess.run([sys.executable, __file__, "--child", "--repeat", str(repeat)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)
    if args.child:
        child(args.repeat)
        return 0

    jit = run_backend(False, args.repeat)
    ref = run_backend(True, args.repeat)
    rows = []
    for name, r_jit in jit["results"].items():
        r_np = ref["results"][name]
        a, b = np.array(r_jit["checksum"]), np.array(r_np["checksum"])
        diff = float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))) if a.shape == b.shape else np.inf
        rows.append({"workload": name, "numba_s": r_jit["seconds"], "numpy_s": r_np["seconds"],
                     "speedup": r_np["seconds"] / r_jit["seconds"], "max_rel_diff": diff})
    if args.json:
        print(json.dumps({"backends": [jit["backend"], ref["backend"]], "rows": rows}, indent=2))
    else:
        print(f"{'workload':<34}{'numba (s)':>12}{'numpy (s)':>12}{'speedup':>10}{'max rel diff':>14}")
        for r in rows:
            print(f"{r['workload']:<34}{r['numba_s']:>12.5f}{r['numpy_s']:>12.5f}"
                  f"{r['speedup']:>9.1f}x{r['max_rel_diff']:>14.2e}")
    return 0 if all(r["max_rel_diff"] <= 1e-12 for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
