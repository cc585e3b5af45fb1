"""Benchmark the numba kernels against their pure-numpy twins.

Runs each hot kernel on a representative workload with both backends and
prints per-call times plus the speedup. The numba side is JIT-warmed
before timing so compilation cost never pollutes the numbers.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats N] [--loops N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from deidpipe import _kernels


def _best_per_call(fn, args, loops: int, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(loops):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / loops)
    return best


def _workloads(rng: np.random.Generator) -> list[tuple[str, str, str, tuple]]:
    table = rng.standard_normal((5000, 64))
    table /= np.linalg.norm(table, axis=1, keepdims=True)
    q = rng.standard_normal(64)
    q /= np.linalg.norm(q)
    img = rng.random((256, 256))
    x = rng.random((128, 128))
    y = np.clip(x + 0.05 * rng.standard_normal(x.shape), 0.0, 1.0)
    return [
        ("cosine_scores", "5000x64 table", "cosine_scores", (q, table)),
        ("block_mean", "256x256 -> 8x8", "block_mean", (img, 8, 8)),
        ("lowpass_block4", "256x256", "lowpass_block4", (img,)),
        ("ssim_mean", "128x128, win 8", "ssim_mean", (x, y, 8)),
    ]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5, help="timing repeats, best wins")
    parser.add_argument("--loops", type=int, default=20, help="calls per repeat")
    args = parser.parse_args()

    if _kernels.HAS_NUMBA:
        _kernels.warmup()
    rng = np.random.default_rng(0)

    avail = "yes" if _kernels.HAS_NUMBA else "no"
    print(f"active package backend: {_kernels.backend()} (numba importable: {avail})")
    header = f"{'kernel':<16} {'workload':<16} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, workload, base, call_args in _workloads(rng):
        np_fn = getattr(_kernels, base + "_numpy")
        t_np = _best_per_call(np_fn, call_args, args.loops, args.repeats)
        if _kernels.HAS_NUMBA:
            nb_fn = getattr(_kernels, base + "_numba")
            got = np.asarray(nb_fn(*call_args))
            np.testing.assert_allclose(got, np.asarray(np_fn(*call_args)), atol=1e-12)
            t_nb = _best_per_call(nb_fn, call_args, args.loops, args.repeats)
            ratio = f"{t_np / t_nb:7.1f}x"
            nb_col = f"{1e3 * t_nb:10.4f}"
        else:
            ratio, nb_col = "     n/a", "       n/a"
        print(f"{name:<16} {workload:<16} {1e3 * t_np:10.4f} {nb_col} {ratio:>8}")
    if not _kernels.HAS_NUMBA:
        print("\nnumba is unavailable or disabled; only the numpy backend was timed.")


if __name__ == "__main__":
    main()
