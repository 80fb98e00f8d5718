"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``; prints one line per kernel
with the median time of each backend and the speed-up.
"""
import argparse
import timeit

import numpy as np
from scipy import integrate

from depcomb import _kernels_py, kernels

try:
    from depcomb import _kernels as _compiled
except ImportError:
    _compiled = None


def _median_time(fn, repeat, number):
    return float(np.median(timeit.repeat(fn, repeat=repeat, number=number))) / number


def _imhof(impl_name, weights, x):
    data = np.ascontiguousarray(np.concatenate(([x / weights[0], weights.size, 1.0, 0.0],
                                                weights / weights[0])))
    head, tail_cos, tail_sin = kernels.imhof_integrands(data, backend=impl_name)
    omega = 0.5 * data[0]
    integrate.quad(head, 0.0, 1.0, limit=200, epsabs=1e-13)
    integrate.quad(tail_cos, 0.0, np.inf, weight="cos", wvar=omega, limlst=200)
    integrate.quad(tail_sin, 0.0, np.inf, weight="sin", wvar=omega, limlst=200)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; only the fallback is available")
        return
    rng = np.random.default_rng(0)
    O = rng.dirichlet(np.ones(200), size=200)
    sorted_p = np.sort(rng.random((1000, 200)), axis=1)
    hs = np.array([1, 3, 5, 10, 20], dtype=np.intp)
    weights = np.sort(rng.exponential(size=100))[::-1].copy()

    cases = [
        ("bray_curtis 200x200", lambda m: m.bray_curtis(O), 3),
        ("hc_prefix_max 1000x200", lambda m: m.hc_prefix_max(sorted_p, hs), 10),
        ("simes_min 1000x200", lambda m: m.simes_min(sorted_p), 10),
    ]
    print(f"{'kernel':<28}{'cython (ms)':>14}{'python (ms)':>14}{'speed-up':>10}")
    for name, call, number in cases:
        fast = _median_time(lambda: call(_compiled), args.repeat, number)
        slow = _median_time(lambda: call(_kernels_py), args.repeat, number)
        print(f"{name:<28}{fast * 1e3:>14.3f}{slow * 1e3:>14.3f}{slow / fast:>10.1f}")
    fast = _median_time(lambda: _imhof("cython", weights, 50.0), args.repeat, 5)
    slow = _median_time(lambda: _imhof("python", weights, 50.0), args.repeat, 2)
    print(f"{'imhof sf, 100 weights':<28}{fast * 1e3:>14.3f}{slow * 1e3:>14.3f}{slow / fast:>10.1f}")


if __name__ == "__main__":
    main()
