"""Time the compiled binned-moments kernel against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat 20]

Sizes cover one SNR measurement (1,000 traces) up to a calibration probe
(100,000 traces), 32 samples per trace, 9 Hamming-weight classes.
"""
import argparse
import timeit

import numpy as np

from emsniff import _kernels_py

try:
    from emsniff import _kernels as compiled
except ImportError:
    compiled = None


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--samples", type=int, default=32)
    args = ap.parse_args(argv)
    if compiled is None:
        print("compiled extension not built; only the fallback is timed")
    rng = np.random.default_rng(0)
    print(f"{'traces':>8} {'python ms':>10} {'cython ms':>10} {'speedup':>8}")
    for n in (1_000, 10_000, 100_000):
        labels = rng.integers(0, 9, n)
        x = rng.normal(size=(n, args.samples))
        row = []
        for impl in (_kernels_py, compiled):
            if impl is None:
                row.append(float("nan"))
                continue
            t = timeit.repeat(lambda: impl.binned_moments(labels, x, 9), number=1, repeat=args.repeat)
            row.append(min(t) * 1e3)
        print(f"{n:>8} {row[0]:>10.3f} {row[1]:>10.3f} {row[0] / row[1]:>7.1f}x")


if __name__ == "__main__":
    main()
