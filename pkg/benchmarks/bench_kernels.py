"""
Compare the compiled and pure-numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--sizes 50 100 200] [--repeat 5]

Prints the best-of-``repeat`` wall time of each hot kernel per site count
and the speed-up of the compiled backend, after checking both backends
agree to 1e-12.
"""

import argparse
import timeit

import numpy as np

from windgp.kernels import get_backend


def random_spd(rng, n):
    ang = rng.uniform(0, np.pi, n)
    ev = rng.uniform(0.05, 0.5, (n, 2))
    c, s = np.cos(ang), np.sin(ang)
    r = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    return r @ (ev[:, :, None] * np.eye(2)) @ r.transpose(0, 2, 1)


def cases(n, rng):
    x = rng.uniform(0, 1, (n, 2))
    sig = random_spd(rng, n)
    a = rng.uniform(-np.pi, np.pi, n)
    w = np.column_stack([np.cos(a), np.sin(a)])
    return {
        "ns_matern (nu=1)": lambda k: k.ns_matern_cross(x, sig, x, sig, 1.0, True),
        "ns_matern (nu=2.5)": lambda k: k.ns_matern_cross(x, sig, x, sig, 2.5, True),
        "ns_gauss": lambda k: k.ns_gauss_cross(x, sig, x, sig, True),
        "projection_alpha": lambda k: k.projection_alpha(x, w, x, w, 0.1, 0.2),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    ap.add_argument("--sizes", type=int, nargs="+", default=[50, 100, 200])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    py = get_backend("python")
    cy = get_backend("cython")
    if cy is py:
        cy = None
        print("compiled backend not built; timing the numpy backend only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20}{'n':>6}{'numpy ms':>12}{'cython ms':>12}{'speed-up':>10}")
    for n in args.sizes:
        for name, fn in cases(n, rng).items():
            t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat))
            line = f"{name:<20}{n:>6}{1e3 * t_py:>12.2f}"
            if cy is not None:
                if not np.allclose(fn(py), fn(cy), rtol=1e-12, atol=1e-12):
                    raise SystemExit(f"backends disagree on {name} at n={n}")
                t_cy = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat))
                line += f"{1e3 * t_cy:>12.2f}{t_py / t_cy:>10.1f}"
            print(line)


if __name__ == "__main__":
    main()
