"""Time the numba kernels against their numpy fallbacks.

Run ``python3 benchmarks/bench_kernels.py``. Each kernel gets one warm-up call
per backend (numba compiles there) and the best of ``--repeat`` timed calls.
Outputs are compared so a speedup never hides a mismatch.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from mamamia import kernels
from mamamia.generators import GsdParams
from mamamia.generators.gsd import Evolver, OneHotMap, candidate_queries, query_counts


def best_of(fn, repeat: int) -> tuple[float, object]:
    out = fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def cases(n: int, seed: int):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 10, n)
    y = rng.integers(0, 1000, n)
    logtab = kernels.log_table(n)
    cdf = np.cumsum(rng.dirichlet(np.ones(10), 1000), axis=1)
    codes = rng.integers(0, 1000, n)
    u = rng.random(n)
    yield "joint_counts", lambda impl: impl["joint_counts"](x, y, 10, 1000)
    yield "mi_codes", lambda impl: impl["mi_codes"](x, y, 10, 1000, logtab)
    yield "sample_rows", lambda impl: impl["sample_rows"](cdf, codes, u)

    sizes = (3, 5, 10, 4, 8, 2, 6)
    onehot = OneHotMap(sizes)
    cand = candidate_queries(onehot, 2)
    truth = np.column_stack([rng.integers(0, s, 1000) for s in sizes])
    q = cand[rng.choice(len(cand), 64, replace=False)]
    freq = query_counts(truth, onehot, q) / 1000
    params = GsdParams(generations=300, patience=10_000, queries=64, rounds=1)

    def evolve(impl):
        name = "numba" if impl is kernels.BACKENDS.get("numba") else "numpy"
        ev = Evolver(sizes, 1000, params, np.random.default_rng(seed), name)
        ev.set_targets(q, freq)
        ev.run(params.generations)
        return ev.history

    yield "evolve (300 generations)", evolve


def same(a, b) -> bool:
    if isinstance(a, float):
        return a == b
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--rows", type=int, default=200_000)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if "numba" not in kernels.BACKENDS:
        print("numba is not available; only the numpy backend can be timed")
    print(f"{'kernel':<26}{'numpy s':>10}{'numba s':>10}{'speedup':>9}  match")
    for name, fn in cases(args.rows, args.seed):
        t_np, out_np = best_of(lambda: fn(kernels.BACKENDS["numpy"]), args.repeat)
        if "numba" in kernels.BACKENDS:
            t_nb, out_nb = best_of(lambda: fn(kernels.BACKENDS["numba"]), args.repeat)
            print(f"{name:<26}{t_np:>10.4f}{t_nb:>10.4f}{t_np / t_nb:>8.1f}x  {same(out_np, out_nb)}")
        else:
            print(f"{name:<26}{t_np:>10.4f}{'-':>10}{'-':>9}")


if __name__ == "__main__":
    main()
