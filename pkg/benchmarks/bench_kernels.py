"""Compare the compiled and pure-NumPy solver kernels.

Runs each inner loop with tolerance 0 on random problems of growing
size. The smooth loop then always uses the full iteration budget; the
heat loop stops once its objective stops changing in floating point,
which can happen a few iterations apart on the two backends. Timings are
therefore reported per iteration (median over repeats), together with
the iteration counts and the largest difference between the solutions.

    python benchmarks/bench_kernels.py --sizes 20 50 100 --iterations 500
"""

import argparse
import statistics
import time

import numpy as np

from glmm.solvers import HeatProblem, matrix_log_psd
from glmm.solvers._backend import load


def smooth_args(n, iterations, rng):
    ei, ej = (a.astype(np.int64) for a in np.triu_indices(n, 1))
    z = rng.uniform(0.1, 2.0, ei.size)
    w0 = np.full(ei.size, 1.0 / (n - 1))
    d0 = np.bincount(ei, w0, n) + np.bincount(ej, w0, n)
    step = 0.9 / (0.4 + np.sqrt(2.0 * (n - 1)))
    return "smooth_primal_dual", (z, ei, ej, n, 1.0, 0.1, step, iterations, 0.0, w0, -1.0 / d0)


def heat_args(n, iterations, rng):
    X = rng.standard_normal((5 * n, n))
    prob = HeatProblem(matrix_log_psd(np.cov(X, rowvar=False)), 0.5, 0.05)
    step = 0.95 / prob.lipschitz()
    w0 = np.zeros(prob.ei.size)
    return "heat_fista", (prob.a_off, prob.a_diag, prob.const, prob.ei, prob.ej, n, 0.5, 0.05, step, iterations, 0.0, w0)


def timed(fn, args, repeats):
    """Median seconds per iteration, iteration count and the solution."""
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t)
    iters = int(out[-2])
    return statistics.median(times) / max(iters, 1), iters, out[0]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[20, 50, 100])
    parser.add_argument("--iterations", type=int, default=500)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    python = load("python")
    try:
        compiled = load("compiled")
    except ImportError:
        print("compiled kernels are not built; run `pip install --no-build-isolation -e .` first")
        return 1

    print(f"{'kernel':<20}{'n':>6}{'edges':>8}{'iters':>10}{'python us/it':>14}{'compiled us/it':>16}"
          f"{'speedup':>9}{'max diff':>11}")
    for n in args.sizes:
        for make in (smooth_args, heat_args):
            name, call = make(n, args.iterations, np.random.default_rng(args.seed))
            tp, ip, wp = timed(getattr(python, name), call, args.repeats)
            tc, ic, wc = timed(getattr(compiled, name), call, args.repeats)
            diff = float(np.max(np.abs(wp - wc)))
            print(f"{name:<20}{n:>6}{n * (n - 1) // 2:>8}{f'{ip}/{ic}':>10}{1e6 * tp:>14.2f}{1e6 * tc:>16.2f}"
                  f"{tp / tc:>9.1f}{diff:>11.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
