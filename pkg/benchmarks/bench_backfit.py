"""Benchmark the compiled backfitting kernel against the NumPy fallback.

Usage: python benchmarks/bench_backfit.py [--n 300] [--grid 100] [--reps 50]

Times the kernel iteration alone and the full mediator-model fit (operator
construction included) on a design-4 synthetic problem.
"""

import argparse
import time

import numpy as np

from qfmed import Grid, SimDesign, SmootherConfig, fit_additive, generate
from qfmed import _kernels
from qfmed.mediation import mediator_dataset
from qfmed.mediator_model import _prepare_smoothers, canonical_order


def time_call(fn, reps):
    best = np.inf
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(reps):
            fn()
        best = min(best, (time.perf_counter() - t0) / reps)
    return best * 1000.0


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--n", type=int, default=300)
    parser.add_argument("--grid", type=int, default=100)
    parser.add_argument("--reps", type=int, default=50)
    args = parser.parse_args()

    data = generate(SimDesign(sim_id=4, n=args.n, grid=Grid(args.grid), seed=42))
    md = mediator_dataset(data)
    perm = canonical_order(md)
    config = SmootherConfig()
    prep = _prepare_smoothers(md.x[perm], config)
    ops = _kernels.build_operators(md.values[perm], md.z[perm], *prep[:6])

    kernels = [("python", _kernels.backfit_python)]
    if "cython" in _kernels.available_backends():
        from qfmed._kernels import _backfit_cy

        kernels.append(("cython", _backfit_cy.backfit))
    else:
        print("compiled kernel not built; benchmarking the fallback only")

    print(f"problem: n={args.n}, grid={args.grid}, eval={config.eval_points}, d={md.d}")
    iters = kernels[0][1](ops, config.tolerance, config.max_iter)[4]
    print(f"iterations to converge: {iters}")
    print(f"{'backend':<8} {'kernel ms':>10} {'full fit ms':>12}")
    baseline = None
    for name, fn in kernels:
        t_kernel = time_call(lambda: fn(ops, config.tolerance, config.max_iter), args.reps)
        old = _kernels.backfit
        _kernels.backfit = fn
        try:
            t_fit = time_call(lambda: fit_additive(md, config), max(args.reps // 2, 5))
        finally:
            _kernels.backfit = old
        note = ""
        if baseline is None:
            baseline = t_kernel
        else:
            note = f"  ({baseline / t_kernel:.1f}x kernel speedup)"
        print(f"{name:<8} {t_kernel:>10.3f} {t_fit:>12.3f}{note}")


if __name__ == "__main__":
    main()
