"""Time the numba and numpy kernel paths side by side.

    python3 benchmarks/bench_kernels.py [--n 64] [--N 32768] [--repeat 5]

Both implementations live in ``xform._kernels`` regardless of the
``XFORM_BACKEND`` setting, so one process can compare them directly.
Also reports the end-to-end time of one learning iteration.
"""

import argparse
import statistics
import time

import numpy as np

from xform import _kernels
from xform.learning import LearnConfig, learn
from xform.sparse_coding import Constrained


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times) * 1e3


def _as_tuple(out):
    return out if isinstance(out, tuple) else (out,)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--N", type=int, default=32768)
    ap.add_argument("--s", type=int, default=11)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not _kernels.HAS_NUMBA:
        raise SystemExit("numba is not installed")

    rng = np.random.default_rng(0)
    n, N = args.n, args.N
    Z = rng.normal(size=(n, N))
    s = np.full(N, args.s, dtype=np.int64)
    eta = np.full(N, 1.0)
    thresh = np.full(N, float(n))
    side = int(round(np.sqrt(n)))
    grid = int(np.sqrt(N))
    rows, cols = np.divmod(np.arange(grid * grid), grid)
    patches = rng.normal(size=(side * side, grid * grid))
    H = W = grid + side - 1

    cases = {
        "project_columns": lambda k: k(Z, s),
        "hard_threshold_columns": lambda k: k(Z, eta),
        "select_sparsity": lambda k: k(Z, thresh),
        "overlap_add": lambda k: k(patches, rows, cols, side, H, W),
    }
    print(f"n={n} N={N} threads={_kernels.numba.get_num_threads()} (median of {args.repeat}, ms)")
    print(f"{'kernel':<24}{'numpy':>10}{'numba':>10}{'speedup':>10}")
    for name, call in cases.items():
        k_np = getattr(_kernels, f"{name}_numpy")
        k_nb = getattr(_kernels, f"{name}_numba")
        out_np, out_nb = call(k_np), call(k_nb)  # also compiles the numba kernel
        same = all(np.array_equal(a, b) for a, b in zip(_as_tuple(out_np), _as_tuple(out_nb)))
        t_np = best_of(lambda: call(k_np), args.repeat)
        t_nb = best_of(lambda: call(k_nb), args.repeat)
        print(f"{name:<24}{t_np:>10.2f}{t_nb:>10.2f}{t_np / t_nb:>9.1f}x{'' if same else '  MISMATCH'}")

    Y = rng.normal(size=(n, N))
    cfg = LearnConfig(lambda0=3.1e-3, mode=Constrained(args.s), iterations=5,
                      init="dct" if side * side == n else "identity")
    elapsed = np.asarray(learn(Y, cfg).trace.column("elapsed_ms"))
    print(f"learn: {np.median(np.diff(elapsed)[1:]):.2f} ms per iteration "
          f"(active backend: {_kernels.BACKEND})")


if __name__ == "__main__":
    main()
