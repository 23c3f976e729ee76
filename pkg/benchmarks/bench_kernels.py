"""Time each hot kernel on the numba backend against its numpy twin.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from oparch import kernels


def _best(fn, repeat):
    fn()  # warm-up (triggers JIT compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    d = np.full(20, 0.05)
    a = rng.uniform(0, 0.3, (3, 20))
    eps = rng.standard_normal((20_000, 20))
    z0 = np.ones(20)
    e2 = rng.standard_normal((2000, 20)) ** 2
    y = rng.standard_normal((300, 10))
    gram = y @ y.T
    perms = np.array([rng.permutation(300) for _ in range(50)])
    return {
        "z_recursion T=20000 K=20 p=3": (
            lambda: kernels._z_recursion_jit(d, a, eps, z0),
            lambda: kernels._z_recursion_numpy(d, a, eps, z0),
        ),
        "lyapunov steps=2000 K=20 p=3": (
            lambda: kernels._lyapunov_jit(e2, a, 25),
            lambda: kernels._lyapunov_numpy(e2, a, 25),
        ),
        "perm_hs_stats N=300 perms=50 H=3": (
            lambda: kernels._perm_stats_jit(gram, perms, 3),
            lambda: kernels._perm_stats_numpy(gram, perms, 3),
        ),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba backend unavailable (OPARCH_DISABLE_NUMBA set or numba missing)")
    print(f"{'kernel':36s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speed-up':>9s}")
    for name, (jit, ref) in cases(np.random.default_rng(0)).items():
        tj, tn = _best(jit, args.repeat), _best(ref, args.repeat)
        print(f"{name:36s} {tj * 1e3:11.2f} {tn * 1e3:11.2f} {tn / tj:8.1f}x")


if __name__ == "__main__":
    main()
