"""Time each kernel under the numba and numpy backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]

Reports the best wall time per call (after one warm-up call, which also
absorbs numba compilation) and checks the two backends agree.
"""

import argparse
import math
import timeit

import numpy as np

from sagedecode.kernels import _numba, _numpy


def cases(quick: bool):
    n = 20_000 if quick else 200_000
    rng = np.random.default_rng(0)
    u = rng.random((n, 8))
    probs = 0.8 * 0.9 ** np.arange(8)
    alphas = np.linspace(0, 1, 2_001 if quick else 20_001)
    targets = (1 - alphas) * math.log(10)
    series = np.cumsum(rng.standard_normal(10_000 if quick else 100_000))
    parents = np.array([-1] + [int(rng.integers(0, i)) for i in range(1, 64)])
    return {
        "hash_uniforms": lambda m: m.hash_uniforms(12345, n),
        "leading_successes": lambda m: m.leading_successes(u, probs),
        "min_p1_for_entropy": lambda m: m.min_p1_for_entropy(targets, 10),
        "mix_weight_for_entropy": lambda m: m.mix_weight_for_entropy(targets, 10),
        "lagged_pearson": lambda m: m.lagged_pearson(series, 20),
        "ancestor_mask": lambda m: m.ancestor_mask(parents),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-9, atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="small inputs, for smoke runs")
    args = ap.parse_args(argv)
    print(f"{'kernel':<24}{'numpy ms':>12}{'numba ms':>12}{'ratio':>9}  agree")
    for name, fn in cases(args.quick).items():
        ref, fast = fn(_numpy), fn(_numba)
        t_np = min(timeit.repeat(lambda: fn(_numpy), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: fn(_numba), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<24}{t_np:>12.3f}{t_nb:>12.3f}{t_np / t_nb:>8.1f}x  {_same(ref, fast)}")


if __name__ == "__main__":
    main()
