"""Time the compiled and pure-numpy kernel paths on the same inputs.

    python3 benchmarks/bench_kernels.py [--N 100] [--T 20000] [--repeat 5]

Compilation happens in a warm-up call that is not timed.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from mclab import GeneratorSpec, generate
from mclab._kernels import HAVE_NUMBA, numpy_impl

if HAVE_NUMBA:
    from mclab._kernels import numba_impl


def cases(N: int, T: int):
    sys = generate(GeneratorSpec("gaussian", N, 0.9, seed=0))
    A, C, zeta = (np.ascontiguousarray(a, dtype=float) for a in (sys.A, sys.C, sys.zeta))
    z = np.random.default_rng(0).standard_normal(T)
    X = numpy_impl.simulate_states(A, C, zeta, z)
    M = A.T @ A + np.eye(N)
    B = np.ascontiguousarray(np.eye(N)[:, :4])
    tol = np.finfo(float).eps * np.linalg.norm(A, 2)
    return {
        "simulate_states": lambda k: k.simulate_states(A, C, zeta, z),
        "cross_covariances": lambda k: k.cross_covariances(X, z, 5 * N),
        "krylov_columns": lambda k: k.krylov_columns(A, C, 5 * N),
        "arnoldi": lambda k: k.arnoldi(A, C / np.linalg.norm(C), N - 1, tol),
        "complete_pivot_solve": lambda k: k.complete_pivot_solve(M, B),
    }


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--N", type=int, default=100)
    p.add_argument("--T", type=int, default=20_000)
    p.add_argument("--repeat", type=int, default=5)
    a = p.parse_args()
    backends = [("numpy", numpy_impl)] + ([("numba", numba_impl)] if HAVE_NUMBA else [])
    print(f"N={a.N} T={a.T}, best of {a.repeat}")
    print(f"{'kernel':<22}" + "".join(f"{name:>12}" for name, _ in backends) + ("     speedup" if HAVE_NUMBA else ""))
    for name, fn in cases(a.N, a.T).items():
        times = []
        for _, impl in backends:
            fn(impl)
            times.append(min(timeit.repeat(lambda: fn(impl), number=1, repeat=a.repeat)))
        row = f"{name:<22}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if HAVE_NUMBA:
            row += f"{times[0] / times[1]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
