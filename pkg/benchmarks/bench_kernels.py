"""Time the fitting kernels on both backends.

The package selects numba-compiled kernels by default and falls back to
vectorized numpy when GAUSS_TOMO_NO_NUMBA is set.  This script runs the
same maximum-likelihood and weighted-least-squares workload under each
backend in a fresh subprocess (so imports and JIT state stay separate)
and prints a per-fit comparison.

    python3 benchmarks/bench_kernels.py --fits 5000 --angles 10
"""

import argparse
import json
import os
import subprocess
import sys

_WORKER = r"""
import json, time
import numpy as np
from gauss_tomo._kernels import BACKEND, ml_fit, wls_fit

fits = %(fits)d
m = %(angles)d
rng = np.random.default_rng(7)
th = np.arange(m) * np.pi / m
c2, s2 = np.cos(2.0 * th), np.sin(2.0 * th)
n = np.full(m, 1000.0)

problems = []
for _ in range(fits):
    a0 = rng.uniform(1.0, 5.0)
    a1 = rng.uniform(-0.5, 0.5) * a0
    a2 = rng.uniform(-0.5, 0.5) * a0
    s = a0 + a1 * c2 + a2 * s2
    problems.append(s * rng.chisquare(999, m) / 999.0)

# warm-up: triggers JIT compilation on the numba backend
ml_fit(problems[0], n, c2, s2, 10000, 1e-10)
wls_fit(problems[0], n, c2, s2)

t0 = time.perf_counter()
iters = 0
for v in problems:
    a, lik, it, conv = ml_fit(v, n, c2, s2, 10000, 1e-10)
    iters += it
t_ml = time.perf_counter() - t0

t0 = time.perf_counter()
for v in problems:
    wls_fit(v, n, c2, s2)
t_wls = time.perf_counter() - t0

print(json.dumps({"backend": BACKEND, "ml_s": t_ml, "wls_s": t_wls, "iters": int(iters)}))
"""


def run_backend(no_numba: bool, fits: int, angles: int) -> dict:
    env = dict(os.environ)
    if no_numba:
        env["GAUSS_TOMO_NO_NUMBA"] = "1"
    else:
        env.pop("GAUSS_TOMO_NO_NUMBA", None)
    code = _WORKER % {"fits": fits, "angles": angles}
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fits", type=int, default=5000)
    ap.add_argument("--angles", type=int, default=10)
    args = ap.parse_args()

    results = [run_backend(False, args.fits, args.angles), run_backend(True, args.fits, args.angles)]
    print(f"{args.fits} ML fits, {args.angles} angles per fit")
    print(f"{'backend':<8} {'ml us/fit':>10} {'wls us/fit':>11} {'ml iters':>9}")
    for r in results:
        print(
            f"{r['backend']:<8} {1e6 * r['ml_s'] / args.fits:>10.2f} "
            f"{1e6 * r['wls_s'] / args.fits:>11.2f} {r['iters']:>9d}"
        )
    if results[0]["backend"] == results[1]["backend"]:
        print("note: numba unavailable, both runs used the numpy fallback")
    else:
        print(f"ml speedup: {results[1]['ml_s'] / results[0]['ml_s']:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
