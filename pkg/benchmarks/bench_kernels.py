"""Time the compiled kernels against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 24 64 128] [--repeat 7] [--json out.json]

Each kernel runs on the same random input under both implementations; the
table shows the best-of-N wall time per call and the speed ratio.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from instancegen import kernels

EPS = 1e-6


def cases(n, rng):
    attn = rng.uniform(0.01, 0.99, (n, n))
    mask = rng.random((n, n)) < 0.4
    peaks = rng.random((n, n))
    return {
        "weighted_bce": lambda impl: kernels.weighted_bce(attn, mask, 1.5, 1.0, EPS, impl=impl),
        "masked_ce": lambda impl: kernels.masked_ce(attn, mask, EPS, impl=impl),
        "otsu_threshold": lambda impl: kernels.otsu_threshold(attn, 256, impl=impl),
        "window_maxima r=3": lambda impl: kernels.window_maxima(peaks, 3, impl=impl),
    }


def best_time(fn, repeat):
    number, _ = timeit.Timer(fn).autorange()
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[24, 64, 128])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--json", help="also write the rows to this file")
    args = ap.parse_args(argv)

    impls = kernels.implementations()
    if "cython" not in impls:
        print("compiled extension not built; only the fallback can be timed", file=sys.stderr)
    rng = np.random.default_rng(0)
    rows = []
    print(f"{'kernel':<20}{'grid':>6}" + "".join(f"{name + ' us':>14}" for name in impls) + f"{'speedup':>10}")
    for n in args.sizes:
        for name, run in cases(n, rng).items():
            times = {impl_name: best_time(lambda: run(impl), args.repeat) for impl_name, impl in impls.items()}
            ratio = times["python"] / times["cython"] if "cython" in times else float("nan")
            rows.append({"kernel": name, "grid": n, **{k: v for k, v in times.items()}, "speedup": ratio})
            print(f"{name:<20}{n:>6}" + "".join(f"{t * 1e6:>14.1f}" for t in times.values()) + f"{ratio:>9.1f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
