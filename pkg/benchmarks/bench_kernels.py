"""Compare the compiled EM kernels with the numpy fallback.

Times each kernel on both backends for the same increments and checks that
the results agree bit for bit.

    python3 benchmarks/bench_kernels.py [--m 256] [--N 16384] [--repeat 3]
"""

import argparse
import time

import numpy as np

from discsde import _kernels_py
from discsde.kernels import HAVE_COMPILED, backend_for
from discsde.model import example1, example2, gbm
from discsde.solver import sample_increments


def best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def cases(N):
    ns = [n for n in (2**k for k in range(6, 13)) if N % n == 0]
    return [
        ("endpoints", lambda k, m, dw: k.endpoints(m, dw, [N] + ns)),
        ("continuous_paths", lambda k, m, dw: k.continuous_paths(m, dw, 2**8)),
        ("sup_errors", lambda k, m, dw: k.sup_errors(m, dw, ns[:3])),
        ("occupation", lambda k, m, dw: k.occupation(m, dw, 2**8, [0.01, 0.1])),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=256, help="replications per batch")
    ap.add_argument("--N", type=int, default=2**14, help="finest grid")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not HAVE_COMPILED:
        print("compiled kernels are not available; nothing to compare")
        return
    print(f"{'model':10s} {'kernel':18s} {'python s':>10s} {'compiled s':>11s} {'speedup':>8s}  equal")
    for model in (example1(), example2(), gbm()):
        dw = sample_increments(0, range(args.m), args.N, model.dim)
        fast = backend_for(model, "compiled")
        for name, fn in cases(args.N):
            t_py, r_py = best_of(lambda: fn(_kernels_py, model, dw), args.repeat)
            t_c, r_c = best_of(lambda: fn(fast, model, dw), args.repeat)
            pairs = zip(r_py, r_c) if isinstance(r_py, tuple) else [(r_py, r_c)]
            equal = all(np.array_equal(a, b) for a, b in pairs)
            print(f"{model.name:10s} {name:18s} {t_py:10.4f} {t_c:11.4f} {t_py / t_c:8.1f}  {equal}")


if __name__ == "__main__":
    main()
