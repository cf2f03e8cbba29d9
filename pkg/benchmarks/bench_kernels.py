"""Compiled vs pure-Python kernels: wall time and agreement.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from galign import kernels
from galign.generate import erdos_renyi


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    for n in (50, 100, 200):
        r = rng.standard_normal((n, n))
        yield f"lap n={n}", "lap_maximize", (r,)
    g = erdos_renyi(3200, 8, rng)  # a batch of 32 graphs with N=100
    src, dst = (np.ascontiguousarray(x, dtype=np.int64) for x in g.directed_edges())
    h = rng.standard_normal((g.n, 48))
    yield "segment_sum 3200x48", "segment_sum", (h[src], dst, g.n)
    for normalize in (False, True):
        a, b, v = (rng.standard_normal((g.n, 48)) for _ in range(3))
        fw = kernels.compiled.gated_forward(a, b, v, src, dst, normalize, 1e-6)
        grad = rng.standard_normal((g.n, 48))
        yield f"gated_forward norm={normalize}", "gated_forward", (a, b, v, src, dst, normalize, 1e-6)
        yield f"gated_backward norm={normalize}", "gated_backward", (grad, v, fw[1], fw[0], fw[2], src, dst)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if kernels.compiled is None:
        raise SystemExit("compiled extension not built; reinstall without GALIGN_NO_EXT")
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'cython ms':>10s} {'python ms':>10s} {'speedup':>8s}  max |diff|")
    for label, name, args_ in cases(rng):
        fc, fp = getattr(kernels.compiled, name), getattr(kernels.python, name)
        rc, rp = fc(*args_), fp(*args_)
        rc = rc if isinstance(rc, tuple) else (rc,)
        rp = rp if isinstance(rp, tuple) else (rp,)
        diff = max(float(np.max(np.abs(np.asarray(x, float) - np.asarray(y, float)))) if x is not None else 0.0
                   for x, y in zip(rc, rp))
        tc, tp = best_of(lambda: fc(*args_), args.repeat), best_of(lambda: fp(*args_), args.repeat)
        print(f"{label:28s} {1e3 * tc:10.2f} {1e3 * tp:10.2f} {tp / tc:8.1f}  {diff:.1e}")


if __name__ == "__main__":
    main()
