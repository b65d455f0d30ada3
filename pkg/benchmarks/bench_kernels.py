"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-``repeat`` time per call for each backend and the speedup,
and checks that both backends return identical results on every input.
"""
import argparse
import time

import numpy as np

from hcnas.kernels import backends


def lmo_inputs(rng, rows, items):
    values = rng.normal(size=(rows, items))
    costs = rng.uniform(0.1, 2.0, size=(rows, items))
    mask = np.ones((rows, items), dtype=bool)
    budget = 0.5 * (costs.min(axis=1).sum() + costs.max(axis=1).sum())
    return values, costs, mask, budget


def gather_inputs(rng, n, S, d, C):
    depth = rng.integers(2, d + 1, size=(n, S)).astype(np.int64)
    config = rng.integers(0, C, size=(n, S, d)).astype(np.int64)
    table = rng.uniform(0.1, 2.0, size=(S, d, C))
    return depth, config, table


def best_time(fn, args, repeat, number):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(number):
            out = fn(*args)
        best = min(best, (time.perf_counter() - t0) / number)
    return best, out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    found = backends()
    if "cython" not in found:
        print("compiled backend not built; only the Python fallback is available")
    rng = np.random.default_rng(args.seed)
    cases = [
        ("relaxed_mckp 20x12", "relaxed_mckp", lmo_inputs(rng, 20, 12), 200),
        ("relaxed_mckp 200x12", "relaxed_mckp", lmo_inputs(rng, 200, 12), 20),
        ("prefix_gather_sum 64x5x4", "prefix_gather_sum", gather_inputs(rng, 64, 5, 4, 12), 200),
        ("prefix_gather_sum 100000x5x4", "prefix_gather_sum", gather_inputs(rng, 100_000, 5, 4, 12), 3),
    ]
    print(f"{'kernel':32s} {'python':>12s} {'cython':>12s} {'speedup':>8s}")
    for label, name, inputs, number in cases:
        t_py, out_py = best_time(getattr(found["python"], name), inputs, args.repeat, number)
        if "cython" in found:
            t_cy, out_cy = best_time(getattr(found["cython"], name), inputs, args.repeat, number)
            if not same(out_py, out_cy):
                raise SystemExit(f"{label}: backends disagree")
            print(f"{label:32s} {t_py * 1e6:10.1f}us {t_cy * 1e6:10.1f}us {t_py / t_cy:7.1f}x")
        else:
            print(f"{label:32s} {t_py * 1e6:10.1f}us {'-':>12s} {'-':>8s}")


if __name__ == "__main__":
    main()
