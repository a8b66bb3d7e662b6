"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from spectraflow import _pykernels
from spectraflow.weight import X_SMALL, get_kernel

try:
    from spectraflow import _accel
except ImportError:
    _accel = None


def cases(k, rng):
    t = np.ascontiguousarray(np.sort(rng.uniform(0, k.t_cut, 2000)))
    w = np.ascontiguousarray(rng.uniform(-2, 2, 200_000))
    E = np.ascontiguousarray(np.sort(rng.uniform(-20, 20, 1024)))
    return {
        "sinc2_product (2000 t)": lambda m: m.sinc2_product(t, k._a_desc, k._a2_tail, k._a4_tail, X_SMALL),
        "multiplier_values (2e5 w)": lambda m: m.multiplier_values(w, k._cheb, k.partial_sum),
        "multiplier_matrix (1024 E)": lambda m: m.multiplier_matrix(E, k._cheb, k.partial_sum),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    k = get_kernel(1.0)
    rng = np.random.default_rng(0)
    mods = {"python": _pykernels}
    if _accel is not None:
        mods["compiled"] = _accel
    print(f"{'kernel':30s} " + " ".join(f"{m:>12s}" for m in mods) + ("      speedup" if _accel else ""))
    for name, fn in cases(k, rng).items():
        times = {m: min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)) for m, mod in mods.items()}
        row = f"{name:30s} " + " ".join(f"{times[m] * 1e3:10.2f}ms" for m in mods)
        if _accel is not None:
            row += f"  {times['python'] / times['compiled']:10.1f}x"
            a, b = fn(_pykernels), fn(_accel)
            assert np.allclose(a, b, rtol=1e-12, atol=1e-15), name
        print(row)


if __name__ == "__main__":
    main()
