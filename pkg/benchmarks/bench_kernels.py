"""Compiled vs pure-Python kernels on fitting-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from hiforead import _kernels_py

try:
    from hiforead import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def cases(rng):
    y = 100 + np.cumsum(rng.normal(size=440))
    seas = np.zeros((2, 30))
    seas[0, :7] = rng.normal(size=7)
    seas[1, :30] = rng.normal(size=30)
    periods = np.array([7, 30], dtype=np.int64)
    hw = (y, 0.3, 0.1, 0.2, 0.98, 100.0, 0.1, seas, periods)
    lags = np.array([1, 2, 7, 30], dtype=np.int64)
    ar = (rng.normal(size=60), rng.normal(size=70), rng.normal(0, 0.2, 4), lags)
    return {"hw_filter (T=440, 2 seasons)": ("hw_filter", hw), "ar_recursive (h=70, 4 lags)": ("ar_recursive", ar)}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=200)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<30}{'python':>12}{'cython':>12}{'speedup':>10}")
    for label, (name, call_args) in cases(rng).items():
        py = min(timeit.repeat(lambda: getattr(_kernels_py, name)(*call_args), number=args.repeat, repeat=3))
        py_us = 1e6 * py / args.repeat
        if _compiled is None:
            print(f"{label:<30}{py_us:>10.1f}us{'n/a':>12}{'':>10}")
            continue
        fast = getattr(_compiled, name)
        a, b = fast(*call_args), getattr(_kernels_py, name)(*call_args)
        first = (a[0] if isinstance(a, tuple) else a).tobytes() == (b[0] if isinstance(b, tuple) else b).tobytes()
        cy = min(timeit.repeat(lambda: fast(*call_args), number=args.repeat, repeat=3))
        cy_us = 1e6 * cy / args.repeat
        note = "" if first else "  (outputs differ!)"
        print(f"{label:<30}{py_us:>10.1f}us{cy_us:>10.1f}us{py_us / cy_us:>9.1f}x{note}")


if __name__ == "__main__":
    main()
