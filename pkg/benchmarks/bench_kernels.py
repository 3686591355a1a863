"""Compare the compiled and pure-Python bandwidth sweep kernels.

Run ``python3 benchmarks/bench_kernels.py`` after an editable install.
Each row times one full sweep over every distinct ``|x|`` candidate and
checks that both backends agree.
"""

import argparse
import timeit

import numpy as np

from rdmerr import _kernels_py

try:
    from rdmerr import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def _design(n, seed, discrete):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, n)
    if discrete:
        x = np.round(x * 50) / 50
    y = np.sin(2 * x) + (x >= 0) + rng.normal(0, 0.5, n)
    hs = np.unique(np.abs(x))
    return x, y, hs[hs > 0]


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[1_000, 10_000, 100_000])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if _kernels_c is None:
        print("compiled extension not built; timing the pure-Python backend only")
    print(f"{'n':>9} {'support':>9} {'candidates':>11} {'python s':>10} {'cython s':>10} {'speedup':>8} {'max |dse|':>10}")
    for n in args.sizes:
        for discrete in (False, True):
            x, y, hs = _design(n, args.seed, discrete)
            t_py = _best(lambda: _kernels_py.window_sweep(x, y, hs), args.repeat)
            if _kernels_c is None:
                print(f"{n:>9} {'grid' if discrete else 'cont':>9} {hs.size:>11} {t_py:>10.4f}")
                continue
            t_c = _best(lambda: _kernels_c.window_sweep(x, y, hs), args.repeat)
            a = _kernels_py.window_sweep(x, y, hs)
            b = _kernels_c.window_sweep(x, y, hs)
            ok = np.isfinite(a[1])
            diff = float(np.max(np.abs(a[1][ok] - b[1][ok]))) if ok.any() else 0.0
            print(
                f"{n:>9} {'grid' if discrete else 'cont':>9} {hs.size:>11} "
                f"{t_py:>10.4f} {t_c:>10.4f} {t_py / t_c:>8.1f} {diff:>10.2e}"
            )


if __name__ == "__main__":
    main()
