"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each row prints the best-of-N wall time per call for both backends and the
speedup. Results are also checked for agreement.
"""
import argparse
import timeit

import numpy as np

from nftincentive import kernels


def cases(rng):
    sig = rng.uniform(0.5, 1.0, 101 * 101)
    qs = rng.uniform(0.0, 1.0, 101 * 101)
    counts = np.ones(10)
    n_act = 60
    gain = [rng.uniform(0, 1, n_act) for _ in range(3)]
    cost = [rng.uniform(0, 1, n_act) for _ in range(3)]
    eps = [rng.uniform(0, 1, n_act) for _ in range(3)]
    psi = [rng.uniform(0, 1, n_act) for _ in range(3)]
    long_counts = rng.integers(0, 5, 200).astype(float)
    return {
        "installment_sum d=200": lambda m: m.installment_sum(1.01, 200, 0.5),
        "income_total d=200": lambda m: m.income_total(0.3, 0.9, 0.5, long_counts, 2.0),
        "payoff_sigma_q 101x101": lambda m: m.payoff_sigma_q(sig, qs, 0.3, 0.5, 0.5, 0.0, 0.5, 10, counts, 0.0),
        "game_payoff_table 3x60^3": lambda m: kernels.game_payoff_table(gain, cost, eps, psi, 2.0, impl=m),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if kernels.compiled is None:
        print("compiled extension not available; only the fallback can be timed")
    impls = {"python": kernels.fallback}
    if kernels.compiled is not None:
        impls["cython"] = kernels.compiled
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} " + " ".join(f"{k:>12s}" for k in impls) + "   speedup")
    for name, fn in cases(rng).items():
        times = {}
        results = {}
        for key, mod in impls.items():
            timer = timeit.Timer(lambda: fn(mod))
            n, _ = timer.autorange()
            times[key] = min(timer.repeat(args.repeat, n)) / n
            results[key] = np.asarray(fn(mod), dtype=float)
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        if "cython" in results:
            assert np.allclose(results["python"], results["cython"], rtol=1e-12, atol=1e-12), name
        print(f"{name:28s} " + " ".join(f"{times[k] * 1e6:10.1f}us" for k in impls) + f"   {speed:6.1f}x")


if __name__ == "__main__":
    main()
