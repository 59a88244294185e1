"""Time the compiled and pure-Python particle kernels on the same workloads.

    python benchmarks/bench_kernels.py [--n 2000] [--repeat 3]

Both kernels consume identical random streams, so the outputs are also
compared for bit-equality.
"""
import argparse
import time

import numpy as np

from stochsol import _backend
from stochsol.laws import alpha_law, kpp_law

WORKLOADS = {
    "kpp full line t=1": dict(x0=0.0, horizon=1.0, rate=1.0, table=kpp_law().sampling_table(),
                              lo=0.0, hi=0.0, bounded=False, dt=1e-3),
    "kpp interval (-2,2) t=0.5": dict(x0=0.0, horizon=0.5, rate=1.0,
                                      table=kpp_law().sampling_table(), lo=-2.0, hi=2.0,
                                      bounded=True, dt=1e-3),
    "alpha=1.5 full line t=0.5": dict(x0=0.0, horizon=0.5, rate=2.0,
                                      table=alpha_law(1.5, 0.5).sampling_table(), lo=0.0,
                                      hi=0.0, bounded=False, dt=1e-3),
}


def time_kernel(kernel, spec, n, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = kernel(7, 0, n, spec["x0"], spec["horizon"], spec["rate"], spec["table"],
                     spec["lo"], spec["hi"], spec["bounded"], spec["dt"], 10**6, True)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=2000, help="samples per workload")
    parser.add_argument("--repeat", type=int, default=3, help="timing repeats, best kept")
    args = parser.parse_args()

    py = _backend.get_kernel("python")
    try:
        cy = _backend.get_kernel("cython")
    except ImportError:
        cy = None
        print("compiled kernel not built; timing the Python kernel only")

    print(f"{'workload':30s} {'python us':>10s} {'cython us':>10s} {'speedup':>8s} identical")
    for name, spec in WORKLOADS.items():
        t_py, out_py = time_kernel(py, spec, args.n, args.repeat)
        if cy is None:
            print(f"{name:30s} {1e6 * t_py / args.n:10.1f}")
            continue
        t_cy, out_cy = time_kernel(cy, spec, args.n, args.repeat)
        same = all(np.array_equal(a, b) for a, b in zip(out_py, out_cy))
        print(f"{name:30s} {1e6 * t_py / args.n:10.1f} {1e6 * t_cy / args.n:10.1f} "
              f"{t_py / t_cy:8.2f} {same}")


if __name__ == "__main__":
    main()
