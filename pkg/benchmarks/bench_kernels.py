"""Compare the Cython kernels with their numpy fallbacks.

    python benchmarks/bench_kernels.py [--sizes 500,5000,50000] [--repeat 7]

Kernel timings call both implementations directly. The end-to-end timing runs
one simulation replicate in a subprocess per backend, since the backend is
fixed at import (``ELVOL_PURE_PYTHON``).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from elvol import _pykernels

try:
    from elvol import _ckernels
except ImportError:
    _ckernels = None

REPLICATE_SNIPPET = """
import time
from elvol.kernels import BACKEND
from elvol.simulation import McConfig, run_replicate
cfg = McConfig(scenario="{scenario}", n_units={n})
run_replicate(cfg, 0)
t = time.perf_counter()
for i in range({reps}):
    run_replicate(cfg, i)
print(BACKEND, (time.perf_counter() - t) / {reps})
"""


def best_of(fn, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def kernel_rows(sizes, repeat, rng):
    rows = []
    for n in sizes:
        B = rng.normal(size=(n, 3))
        H = rng.normal(size=(n, 3))
        w = rng.exponential(size=n)
        u = rng.normal(size=(n, 4))
        lam = rng.normal(size=4) * 0.01
        cases = {
            "weighted_moments": lambda m: m.weighted_moments(1.0 + w, w, B, H),
            "el_dual_terms": lambda m: m.el_dual_terms(u, lam),
        }
        for name, call in cases.items():
            t_py = best_of(lambda: call(_pykernels), repeat)
            t_c = best_of(lambda: call(_ckernels), repeat) if _ckernels else float("nan")
            rows.append((name, n, t_py, t_c))
    return rows


def replicate_time(pure, scenario, n, reps):
    env = dict(os.environ)
    env.pop("ELVOL_PURE_PYTHON", None)
    if pure:
        env["ELVOL_PURE_PYTHON"] = "1"
    code = REPLICATE_SNIPPET.format(scenario=scenario, n=n, reps=reps)
    out = subprocess.run([sys.executable, "-c", code], env=env, check=True,
                         capture_output=True, text=True).stdout.split()
    return out[0], float(out[1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="500,5000,50000")
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--replicates", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    sizes = [int(s) for s in args.sizes.split(",")]

    if _ckernels is None:
        print("compiled extension not built; only numpy timings are shown")
    print(f"{'kernel':18s} {'n':>7s} {'numpy us':>10s} {'cython us':>10s} {'speedup':>8s}")
    for name, n, t_py, t_c in kernel_rows(sizes, args.repeat, np.random.default_rng(args.seed)):
        print(f"{name:18s} {n:7d} {t_py * 1e6:10.1f} {t_c * 1e6:10.1f} {t_py / t_c:8.2f}")

    print(f"\none replicate (M1, N=5000, default estimators), mean of {args.replicates}:")
    for pure in (True, False):
        backend, sec = replicate_time(pure, "M1", 5000, args.replicates)
        print(f"  {backend:7s} {sec * 1e3:8.1f} ms")


if __name__ == "__main__":
    main()
