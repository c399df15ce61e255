"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20] [--n 4000]
"""

import argparse
import timeit

import numpy as np

from aiol.kernels import available_backends


def _cases(n, K, rng):
    logits = rng.normal(0.0, 3.0, (n, K))
    labels = rng.integers(0, K, n)
    x = np.concatenate([rng.normal(0.3, 0.05, n // 2), rng.normal(0.8, 0.08, n - n // 2)])
    return {
        "confidence_scores": lambda m: m.confidence_scores(logits, 1.5),
        "temperature_nll": lambda m: m.temperature_nll(logits, labels, 1.5),
        "em_gmm_1d": lambda m: m.em_gmm_1d(x, np.array([0.5, 0.5]), np.array([0.2, 0.9]),
                                           np.array([0.05, 0.05]), 200, 1e-6, 1e-6),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=4000)
    ap.add_argument("--K", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    backends = available_backends()
    cases = _cases(args.n, args.K, np.random.default_rng(0))
    print(f"n={args.n} K={args.K} repeat={args.repeat}; best-of-5 mean ms per call")
    print(f"{'kernel':<20}" + "".join(f"{b:>12}" for b in backends) + ("   speedup" if len(backends) > 1 else ""))
    for name, fn in cases.items():
        times = {}
        for b, mod in backends.items():
            fn(mod)  # warm-up
            t = min(timeit.repeat(lambda: fn(mod), number=args.repeat, repeat=5))
            times[b] = 1e3 * t / args.repeat
        line = f"{name:<20}" + "".join(f"{times[b]:>12.4f}" for b in backends)
        if "cython" in times and "python" in times:
            line += f"{times['python'] / times['cython']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
