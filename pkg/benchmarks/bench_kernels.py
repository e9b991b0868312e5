"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N] [--no-e2e]

The end-to-end rows run one PPF scenario in a subprocess with and without
``SGNMG_DISABLE_NUMBA=1`` so the flag is honored at import time.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from sgnmg import kernels

E2E = """
import time
from sgnmg.engine import run
from sgnmg.scenario import generate_ppf_suite
spec = generate_ppf_suite(0, 1)[0]
run(spec)
t = time.perf_counter()
for _ in range(3):
    run(spec)
print((time.perf_counter() - t) / 3)
"""


def _time(fn, repeat: int) -> float:
    fn()  # warm-up (includes JIT compilation)
    t = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t) / repeat


def kernel_cases():
    rng = np.random.default_rng(0)
    x = rng.normal(size=1000)
    t = np.arange(100) * 1e-3
    y = 50.0 + 0.3 * t + 1e-4 * rng.normal(size=100)
    v = np.ones(100)
    harm = np.zeros((100, 26))
    harm[:, 1] = 1.0
    harm[:, 3] = 0.05
    n = 10
    p_set = np.array([0.4, 0.4])
    p_max = np.ones(2)
    inv_r = np.array([20.0, 20.0])
    demand = np.full(n, 0.9)

    def euler(impl):
        def f():
            impl(0.0, p_set.copy(), 0.0, 0.5, 1e-3, 10.0, 1.0, 0.3, p_set, p_max, inv_r,
                 0.0, demand, 0.0, 0.002, 0.2, 0.5, 20.0,
                 np.empty(n), np.empty((n, 2)), np.empty(n), np.empty(n))
        return f

    yield ("euler_steps (10 steps)", euler(kernels.euler_steps_numpy), euler(kernels.euler_steps_numba))
    yield ("synth_pow (100 ms window)",
           lambda: kernels.synth_pow_numpy(v, harm, 10, 10000.0, 50.0),
           lambda: kernels.synth_pow_numba(v, harm, 10, 10000.0, 50.0))
    yield ("dft_amplitudes (K=25)",
           lambda: kernels.dft_amplitudes_numpy(x, 10000.0, 50.0, 25),
           lambda: kernels.dft_amplitudes_numba(x, 10000.0, 50.0, 25))
    yield ("ls_slope (100 frames)",
           lambda: kernels.ls_slope_numpy(t, y),
           lambda: kernels.ls_slope_numba(t, y))


def e2e(disable: bool) -> float:
    env = dict(os.environ)
    if disable:
        env["SGNMG_DISABLE_NUMBA"] = "1"
    else:
        env.pop("SGNMG_DISABLE_NUMBA", None)
    out = subprocess.run([sys.executable, "-c", E2E], env=env, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--no-e2e", action="store_true")
    args = ap.parse_args(argv)

    print(f"numba available: {kernels.HAS_NUMBA}")
    print(f"{'kernel':28s} {'numpy us':>10s} {'numba us':>10s} {'speedup':>8s}")
    for name, f_np, f_nb in kernel_cases():
        a = _time(f_np, args.repeat) * 1e6
        b = _time(f_nb, args.repeat) * 1e6
        print(f"{name:28s} {a:10.2f} {b:10.2f} {a / b:8.2f}")
    if not args.no_e2e:
        a = e2e(True)
        b = e2e(False)
        print(f"{'end-to-end PPF run (s)':28s} {a:10.3f} {b:10.3f} {a / b:8.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
