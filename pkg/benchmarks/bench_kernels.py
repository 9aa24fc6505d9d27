"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Prints one row per kernel with the best wall time of each backend, the speedup,
and whether the two produced identical output.
"""
import argparse
import time

import numpy as np

from hybridseg.kernels import _fallback

try:
    from hybridseg.kernels import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    n = 300
    table = np.full((n + 1, n + 1), np.inf)
    iu = np.triu_indices(n + 1, 1)
    table[iu] = rng.uniform(0, 5, len(iu[0])) * (iu[1] - iu[0])
    x = np.ascontiguousarray(rng.normal(size=(400, 2)))
    times = np.linspace(0, 15, 200)
    return {
        "pelt_table n=300": lambda m: m.pelt_table(table, 2.0, 5, 10.0),
        "pelt_table n=300 K=inf": lambda m: m.pelt_table(table, 2.0, 5, np.inf),
        "known_k_table n=300 k=4": lambda m: m.known_k_table(table, 4, 5),
        "rbf_cost_matrix n=400": lambda m: m.rbf_cost_matrix(x, 0.5),
        "lv_solve t=15": lambda m: m.lv_solve((1.0, 1.0, 2.0, 1.0), np.array([2.0, 1.0]), times,
                                              1e-8, 1e-8, 100_000),
    }


def best_of(fn, repeat):
    out, best = None, np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, dict):
        return a == b
    return np.allclose(np.asarray(a), np.asarray(b), rtol=1e-10, atol=1e-12, equal_nan=True)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if _kernels is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    print(f"{'kernel':28s} {'python s':>10s} {'compiled s':>11s} {'speedup':>8s}  match")
    for name, fn in cases(np.random.default_rng(args.seed)).items():
        slow, ts = best_of(lambda: fn(_fallback), args.repeat)
        fast, tf = best_of(lambda: fn(_kernels), args.repeat)
        print(f"{name:28s} {ts:10.4f} {tf:11.5f} {ts / tf:8.1f}  {same(slow, fast)}")


if __name__ == "__main__":
    main()
