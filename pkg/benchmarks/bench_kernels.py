#!/usr/bin/env python3
"""
Kernel benchmark: numba-compiled versus pure-numpy execution.

Each backend runs in its own interpreter (the backend is fixed at import
time by ``VORTEXLAB_NUMBA``).  The compiled timings exclude the first,
compiling call.

Usage:
    python3 benchmarks/bench_kernels.py [--repeat 3] [--json]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

CASES = ("eval_modes", "trace", "cap_counts", "shell_scan")


def _time(fn, repeat):
    fn()  # warm-up (compilation for numba)
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def run_cases(repeat: int) -> dict:
    import numpy as np

    from vortexlab import backend_name, kernels
    from vortexlab.beltrami import fibonacci_sphere, points_array, rational_sphere_points
    from vortexlab.spectral import Grid
    from vortexlab.topology import LineField, perturbed_shear

    lf = LineField.from_field(perturbed_shear(2, Grid(16), 1e-3) * 0.5)
    pts = np.random.default_rng(0).uniform(0, 6.28, (2000, 3))
    sphere = np.ascontiguousarray(points_array(rational_sphere_points(51)))
    centers = fibonacci_sphere(200)
    cos_ap = np.cos(np.radians([10.0, 30.0, 60.0]))
    cases = {
        "eval_modes": lambda: kernels.eval_modes(lf.K, lf.C, lf.c0, pts),
        "trace": lambda: lf.trace(np.array([0.3, 0.2, 0.4]), 500.0, 1e-9, 5.0, record_stride=10),
        "cap_counts": lambda: kernels.cap_counts(sphere, centers, cos_ap),
        "shell_scan": lambda: kernels.shell_scan(101),
    }
    return {"backend": backend_name(), "modes": int(len(lf.K)),
            "seconds": {k: _time(f, repeat) for k, f in cases.items()}}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", action="store_true", help="print raw results as JSON")
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    a = ap.parse_args()
    if a.worker:
        print(json.dumps(run_cases(a.repeat)))
        return
    results = {}
    for flag in ("1", "0"):
        env = dict(os.environ, VORTEXLAB_NUMBA=flag)
        out = subprocess.run([sys.executable, __file__, "--worker", "--repeat", str(a.repeat)],
                             env=env, check=True, capture_output=True, text=True).stdout
        r = json.loads(out.strip().splitlines()[-1])
        results[r["backend"]] = r
    if a.json:
        print(json.dumps(results, indent=2))
        return
    fast, slow = results["numba"]["seconds"], results["numpy"]["seconds"]
    print(f"{'kernel':<12}{'numba [s]':>14}{'numpy [s]':>14}{'speed-up':>10}")
    for k in CASES:
        print(f"{k:<12}{fast[k]:>14.5f}{slow[k]:>14.5f}{slow[k] / fast[k]:>10.1f}")


if __name__ == "__main__":
    main()
