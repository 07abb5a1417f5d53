"""Time the compiled Euler-Maruyama kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Both backends get identical inputs; the script also reports the largest
absolute difference between their outputs.
"""
import argparse
import time

import numpy as np

from feplab import _backend


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_path(kern, n, steps, rng):
    B = -np.eye(n) + 0.1 * rng.standard_normal((n, n))
    L = 0.05 * np.eye(n)
    z = rng.standard_normal((steps, n))
    x0 = np.zeros(n)
    out = np.empty((steps + 1, n))
    return (lambda: kern.em_linear_path(x0, B, L, z, 1e-3, out, 1e300)), out


def bench_ensemble(kern, m, n, steps, rng):
    B = -np.eye(n) + 0.1 * rng.standard_normal((n, n))
    L = 0.05 * np.eye(n)
    Z = rng.standard_normal((m, steps, n))
    X0 = np.zeros((m, n))
    record = np.array([steps], dtype=np.intp)
    out = np.empty((1, m, n))
    return (lambda: kern.em_linear_ensemble(X0, B, L, Z, 1e-3, record, out, 1e300)), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _backend.compiled is None:
        raise SystemExit("compiled extension not built; run `pip install --no-build-isolation -e .` first")
    cases = [
        ("path n=1, 1e6 steps", lambda k, r: bench_path(k, 1, 1_000_000, r)),
        ("path n=4, 2e5 steps", lambda k, r: bench_path(k, 4, 200_000, r)),
        ("ensemble 10000 x n=2, 1000 steps", lambda k, r: bench_ensemble(k, 10_000, 2, 1000, r)),
        ("ensemble 1000 x n=4, 1000 steps", lambda k, r: bench_ensemble(k, 1000, 4, 1000, r)),
    ]
    print(f"{'case':36s} {'compiled s':>11s} {'python s':>10s} {'speedup':>8s} {'max |diff|':>11s}")
    for label, make in cases:
        times, outs = [], []
        for kern in (_backend.compiled, _backend.fallback):
            fn, out = make(kern, np.random.default_rng(0))
            times.append(_time(fn, args.repeat))
            outs.append(out.copy())
        diff = float(np.max(np.abs(outs[0] - outs[1])))
        print(f"{label:36s} {times[0]:11.4f} {times[1]:10.4f} {times[1] / times[0]:8.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
