"""Benchmark the numba kernels against the pure-numpy fallback.

Run from the repo root:

    python benchmarks/bench_kernels.py [--draws N] [--dim D] [--repeat R]

Covers the three hot paths: Gaussian sampling, the Jacobi eigensolver, and
one full simulation grid cell (sampling + scoring + metrics). The numba
column shows n/a when numba is not installed.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from nlscore.kernels import (
    gaussian_pairs_numpy,
    jacobi_eigh,
    load_numba_impls,
    raw_stream_numpy,
)


def _time(fn, repeat):
    fn()  # warm-up (and JIT compile for the numba path)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _jacobi_with(kernel, matrix):
    a = matrix.copy()
    v = np.eye(a.shape[0])
    sweeps = kernel(a, v, 1e-12, 100)
    assert sweeps >= 0


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--draws", type=int, default=4_000_000)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    try:
        numba_impls = load_numba_impls()
    except ImportError:
        numba_impls = None

    from nlscore.kernels import _jacobi_numpy  # fallback kernel

    rng = np.random.default_rng(args.seed)
    base = rng.standard_normal((args.dim, args.dim))
    sym = base @ base.T + 0.5 * np.eye(args.dim)

    n_pairs = args.draws // 2
    rows = []

    t_np = _time(lambda: gaussian_pairs_numpy(args.seed, 0, n_pairs), args.repeat)
    t_nb = (
        _time(lambda: numba_impls["gaussian_pairs"](args.seed, 0, n_pairs), args.repeat)
        if numba_impls
        else None
    )
    rows.append((f"gaussian draws ({args.draws:,})", t_np, t_nb))

    t_np = _time(lambda: raw_stream_numpy(args.seed, 0, args.draws), args.repeat)
    t_nb = (
        _time(lambda: numba_impls["raw_stream"](args.seed, 0, args.draws), args.repeat)
        if numba_impls
        else None
    )
    rows.append((f"uint64 stream ({args.draws:,})", t_np, t_nb))

    t_np = _time(lambda: _jacobi_with(_jacobi_numpy, sym), args.repeat)
    t_nb = (
        _time(lambda: _jacobi_with(numba_impls["jacobi"], sym), args.repeat)
        if numba_impls
        else None
    )
    rows.append((f"jacobi eigh (d={args.dim})", t_np, t_nb))

    # agreement check between the two implementations
    if numba_impls:
        a = gaussian_pairs_numpy(args.seed, 0, 1000)
        b = numba_impls["gaussian_pairs"](args.seed, 0, 1000)
        agree = float(np.abs(a - b).max())
    else:
        agree = float("nan")

    print(f"{'kernel':<28} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name, t_np, t_nb in rows:
        if t_nb is None:
            print(f"{name:<28} {t_np:>9.4f}s {'n/a':>10} {'':>8}")
        else:
            print(f"{name:<28} {t_np:>9.4f}s {t_nb:>9.4f}s {t_np / t_nb:>7.1f}x")
    if numba_impls:
        print(f"max |numpy - numba| over 2000 gaussian draws: {agree:g}")

    # one small end-to-end cell per backend (backend fixed at import, so run
    # this script twice with NLSCORE_BACKEND=numpy / numba to compare).
    from nlscore.kernels import BACKEND
    from nlscore.simulation import preset_config, run_experiment

    cfg = preset_config(
        "desk-unknown", ["rounds=5", "dims=40", "sigmas=1", "name=bench"]
    )
    t0 = time.perf_counter()
    run_experiment(cfg)
    print(f"desk cell (backend={BACKEND}): {time.perf_counter() - t0:.3f}s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
