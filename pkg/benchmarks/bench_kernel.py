"""Time the compiled path kernel against the pure-Python fallback.

    python benchmarks/bench_kernel.py [--T 10] [--dt 1e-3] [--repeat 3]

Both backends integrate the cubic example (one delay atom, two-atom noise)
from the same seed; the script also checks that the paths agree bitwise.
"""
import argparse
import timeit

import numpy as np

from levysdde import AtomsLevy, DelayMeasure, HistorySegment, kernel
from levysdde.dynamics import cubic_example, integrate_deterministic, integrate_full


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=float, default=10.0)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not kernel.HAVE_COMPILED:
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation` first")

    f = cubic_example(DelayMeasure.atom(-0.3))
    xi = HistorySegment.constant(0.5, 1.0)
    levy = AtomsLevy.from_positive_half([0.2, 1.5], [3.0, 0.1])
    cases = {
        "deterministic": lambda: integrate_deterministic(f, xi, args.T, args.dt),
        "full noise": lambda: integrate_full(f, xi, levy, 1e-3, args.T, args.dt, 1),
    }
    steps = round(args.T / args.dt)
    print(f"{'case':<14} {'backend':<9} {'best [s]':>10} {'us/step':>9}")
    for name, run in cases.items():
        paths, best = {}, {}
        for backend in ("compiled", "python"):
            kernel.set_backend(backend)
            paths[backend] = run()
            best[backend] = min(timeit.repeat(run, number=1, repeat=args.repeat))
            print(f"{name:<14} {backend:<9} {best[backend]:>10.4f} {1e6 * best[backend] / steps:>9.2f}")
        kernel.set_backend("auto")
        same = np.array_equal(paths["compiled"].states, paths["python"].states)
        print(f"{name:<14} speedup {best['python'] / best['compiled']:.1f}x, bitwise equal: {same}")


if __name__ == "__main__":
    main()
