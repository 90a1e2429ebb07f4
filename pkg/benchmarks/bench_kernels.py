"""Compare the numba kernels with the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Each workload runs once untimed (numba compilation), then ``--repeat`` timed
runs; the best time is reported. Outputs of the two backends are compared
for bit equality.
"""

import argparse
import time

import numpy as np

from ibupre import _kernels
from ibupre.gadget import make_gadget, sample_g_coset
from ibupre.sampler import Rng, sample_z_vec
from ibupre.scheme import extract, preset, setup


def workloads():
    params = preset("demo")
    pp, msk = setup(params, Rng(1))
    gad = make_gadget(params.n, params.q)
    syndromes = Rng(2).uniform_mod(params.q, (params.n, 2000))
    centers = np.linspace(-3.0, 3.0, 1_000_000)
    ident = np.arange(1, params.n + 1)
    return {
        "sample_z 1e6 draws": lambda: sample_z_vec(centers, 4.0, Rng(3)),
        "gadget coset 2000 cols": lambda: sample_g_coset(gad, syndromes, 7.3, Rng(4)),
        "extract (demo)": lambda: extract(pp, msk, ident, Rng(5)).r1,
    }


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    backends = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])
    jobs = workloads()
    prev = _kernels.get_backend()
    results = {}
    try:
        for name in backends:
            _kernels.set_backend(name)
            for label, fn in jobs.items():
                results[name, label] = best_of(fn, args.repeat)
    finally:
        _kernels.set_backend(prev)

    print(f"{'workload':<26}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}{'identical':>11}")
    for label in jobs:
        row = f"{label:<26}" + "".join(f"{results[b, label][0]:>11.3f}s" for b in backends)
        if len(backends) == 2:
            speed = results["numpy", label][0] / results["numba", label][0]
            same = np.array_equal(results["numpy", label][1], results["numba", label][1])
            row += f"{speed:>9.1f}x{str(same):>11}"
        print(row)


if __name__ == "__main__":
    main()
