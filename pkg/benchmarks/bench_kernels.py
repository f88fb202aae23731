"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20]

Both back-ends are imported directly, so the extension must have been built
(``pip install -e . --no-build-isolation``).  Results are also checked for
equality so a speed-up never hides a wrong answer.
"""
import argparse
import timeit

import numpy as np

from manet_auction import _kernels_py as py

try:
    from manet_auction import _kernels as cy
except ImportError:
    cy = None


def cases(rng):
    n = 40
    x, y = rng.uniform(0, 1000, n), rng.uniform(0, 1000, n)
    vx, vy = rng.uniform(-20, 20, n), rng.uniform(-20, 20, n)
    levels = rng.integers(0, 20, size=(100_000, 2))
    tie_u = rng.random(100_000)
    return {
        "mc_wins (1e5 x 2)": lambda k: k.mc_wins(7, levels, tie_u),
        "advance (40 nodes)": lambda k: k.advance(x.copy(), y.copy(), vx.copy(), vy.copy(), 0.1, 1000.0, 1000.0),
        "link_durations (40 nodes)": lambda k: k.link_durations(x, y, vx, vy, 150.0),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if cy is None:
        raise SystemExit("compiled extension not built; nothing to compare")

    print(f"{'kernel':<28}{'python ms':>12}{'cython ms':>12}{'speed-up':>10}")
    for name, call in cases(np.random.default_rng(0)).items():
        a, b = call(py), call(cy)
        if a is not None and not np.array_equal(np.asarray(a), np.asarray(b), equal_nan=True):
            raise SystemExit(f"{name}: back-ends disagree")
        t_py = min(timeit.repeat(lambda: call(py), number=1, repeat=args.repeat)) * 1e3
        t_cy = min(timeit.repeat(lambda: call(cy), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<28}{t_py:>12.3f}{t_cy:>12.3f}{t_py / t_cy:>9.1f}x")


if __name__ == "__main__":
    main()
