"""Benchmark of the compiled likelihood kernel against the pure-numpy
fallback, plus an end-to-end fit timing.

Run as: python benchmarks/bench_kernels.py [--n 400] [--repeats 200]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

import faft._kernels_py as kernels_py
from faft._backend import HAS_COMPILED, kernels as active_kernels
from faft.fitting import FitSettings, fit_dataset, initial_values, select_support
from faft.likelihood import PackedObjective
from faft.simgen import ScenarioConfig, generate_dataset
from faft.splinecore import GL_NODES, GL_WEIGHTS


def _bench(kernel_module, args_tuple, repeats):
    kernel_module.loglik_grad(*args_tuple)  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        kernel_module.loglik_grad(*args_tuple)
    return (time.perf_counter() - start) / repeats


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=400)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    data, _ = generate_dataset(ScenarioConfig(n=args.n, seed=20230815))
    settings = FitSettings.simulation_default(args.n)
    beta_basis = settings.sieve.beta_basis()
    theta0, residuals = initial_values(data, beta_basis)
    a, b = select_support(residuals)
    g_basis = settings.sieve.g_basis(a, b)
    obj = PackedObjective(data, beta_basis, g_basis)
    gg = np.full(g_basis.dimension, -1.0)
    call = (obj.W, data.y, data.delta, theta0, g_basis.extended, g_basis.order,
            gg, GL_NODES, GL_WEIGHTS)

    print(f"n = {args.n}, packed dimension = {obj.dimension}, repeats = {args.repeats}")
    t_py = _bench(kernels_py, call, args.repeats)
    print(f"pure python kernel : {t_py * 1e3:8.3f} ms / value+gradient")
    if HAS_COMPILED:
        from faft import _core

        t_c = _bench(_core, call, args.repeats)
        print(f"compiled kernel    : {t_c * 1e3:8.3f} ms / value+gradient  "
              f"({t_py / t_c:.1f}x speedup)")
    else:
        print("compiled kernel    : not built (pure-python fallback active)")
    print(f"active backend     : {active_kernels.BACKEND_NAME}")

    start = time.perf_counter()
    fit = fit_dataset(data, settings)
    print(f"full fit           : {(time.perf_counter() - start) * 1e3:8.1f} ms "
          f"({fit.trace.n_iterations} iterations, {fit.trace.termination})")


if __name__ == "__main__":
    main()
