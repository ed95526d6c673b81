"""Time the compiled and pure-NumPy kernel backends on the same inputs.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``.
"""

import argparse
import timeit

import numpy as np

from dcsolve.kernels import backends
from dcsolve.problems import sfs_coefficients


def cases(rng):
    m = n = 64
    yy, xx = np.mgrid[0:m, 0:n].astype(float)
    coeffs = sfs_coefficients(xx, yy)
    i2 = rng.uniform(0.5, 1.0, (m - 1, n - 1)) ** 2
    z = rng.standard_normal((m, n))
    big = rng.standard_normal(100_000)
    pts = [rng.standard_normal(2) * 5 for _ in range(200)]
    return {
        "sfs_value_grad 64x64": lambda k: k.sfs_value_grad(z, i2, *coeffs, 0.3, 0.2, 0.93, True),
        "soft_threshold 1e5": lambda k: k.soft_threshold(big, 0.5),
        "dykstra x200 (2-d)": lambda k: [k.dykstra_ball_halfspace(p, 3.0, 1e-3) for p in pts],
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=20)
    args = ap.parse_args()
    mods = backends()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24s}" + "".join(f"{name:>14s}" for name in mods) + "   speedup")
    for label, fn in cases(rng).items():
        times = {}
        for name, mod in mods.items():
            t = timeit.repeat(lambda: fn(mod), repeat=args.repeat, number=args.number)
            times[name] = min(t) / args.number
        row = f"{label:<24s}" + "".join(f"{times[n] * 1e3:>12.3f}ms" for n in mods)
        if "compiled" in times:
            row += f"   {times['python'] / times['compiled']:6.1f}x"
        print(row)


if __name__ == "__main__":
    main()
