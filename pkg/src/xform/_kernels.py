"""Column-wise inner loops with a numba path and a pure-numpy path.

The backend is chosen once at import time from ``XFORM_BACKEND``
(``numba`` or ``numpy``). ``numba`` is the default when the package is
importable. ``XFORM_THREADS`` caps the numba worker pool.

Both paths produce bitwise-identical results; the test suite runs each
kernel through both implementations.
"""

import os

import numpy as np

try:
    import numba
    from numba import njit, prange

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

_requested = os.environ.get("XFORM_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"XFORM_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

BACKEND = "numba" if (_requested == "numba" and HAS_NUMBA) else "numpy"

if HAS_NUMBA and "NUMBA_THREADING_LAYER" not in os.environ:
    # probe OpenMP before TBB; old system TBB builds are rejected with a warning
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

if HAS_NUMBA and os.environ.get("XFORM_THREADS"):
    numba.set_num_threads(max(1, min(int(os.environ["XFORM_THREADS"]),
                                     numba.config.NUMBA_NUM_THREADS)))


# --------------------------------------------------------------------------
# s-sparse projection, per column, lowest-index tie break
# --------------------------------------------------------------------------

def project_columns_numpy(Z, s):
    """Keep the ``s[i]`` largest-magnitude entries of each column of `Z`.

    Ties in magnitude are resolved in favour of the lowest row index.
    """
    n, N = Z.shape
    out = np.zeros_like(Z)
    if N == 0:
        return out
    mag = np.abs(Z)
    # stable sort on -|z| lists equal magnitudes in increasing row order
    order = np.argsort(-mag, axis=0, kind="stable")
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(n)[:, None].repeat(N, axis=1), axis=0)
    keep = rank < s[None, :]
    out[keep] = Z[keep]
    return out


def hard_threshold_columns_numpy(B, eta):
    out = B.copy()
    out[np.abs(B) < eta[None, :]] = 0.0
    return out


def select_sparsity_numpy(Z, thresh):
    """Smallest s per column with tail energy of the sorted squares <= thresh."""
    n, N = Z.shape
    sq = np.sort(Z * Z, axis=0)[::-1]
    csum = np.cumsum(sq, axis=0)
    total = csum[-1]
    # residual[k] = energy left after keeping the k largest entries
    residual = np.empty((n + 1, N))
    residual[0] = total
    residual[1:] = total[None, :] - csum
    residual[-1] = 0.0
    return np.count_nonzero(residual > thresh[None, :], axis=0).astype(np.int64)


def overlap_add_numpy(values, rows, cols, side, height, width):
    """Sum patch values into an image and count how often each pixel is hit.

    Patch vectors are column-major within the patch: entry ``c * side + r``
    sits at offset (r, c) from the patch origin.
    """
    dr = np.tile(np.arange(side), side)
    dc = np.repeat(np.arange(side), side)
    flat = (rows[None, :] + dr[:, None]) * width + (cols[None, :] + dc[:, None])
    acc = np.bincount(flat.ravel(), weights=values.ravel(), minlength=height * width)
    cnt = np.bincount(flat.ravel(), minlength=height * width)
    return acc.reshape(height, width), cnt.reshape(height, width)


# --------------------------------------------------------------------------
# numba versions
# --------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(parallel=True, cache=True)
    def project_columns_numba(Z, s):
        n, N = Z.shape
        out = np.zeros_like(Z)
        for i in prange(N):
            k = s[i]
            if k <= 0:
                continue
            if k >= n:
                for j in range(n):
                    out[j, i] = Z[j, i]
                continue
            order = np.argsort(-np.abs(Z[:, i]), kind="mergesort")
            for t in range(k):
                j = order[t]
                out[j, i] = Z[j, i]
        return out

    @njit(parallel=True, cache=True)
    def hard_threshold_columns_numba(B, eta):
        n, N = B.shape
        out = np.zeros_like(B)
        for i in prange(N):
            e = eta[i]
            for j in range(n):
                b = B[j, i]
                if abs(b) >= e:
                    out[j, i] = b
        return out

    @njit(parallel=True, cache=True)
    def select_sparsity_numba(Z, thresh):
        n, N = Z.shape
        out = np.empty(N, dtype=np.int64)
        for i in prange(N):
            sq = np.sort(Z[:, i] * Z[:, i])[::-1]
            total = 0.0
            for j in range(n):
                total += sq[j]
            # mirror the numpy path's arithmetic: total - cumsum
            k = 0
            if total > thresh[i]:
                k = 1
                csum = 0.0
                for j in range(n - 1):
                    csum += sq[j]
                    if total - csum > thresh[i]:
                        k += 1
                    else:
                        break
            out[i] = k
        return out

    @njit(cache=True)
    def overlap_add_numba(values, rows, cols, side, height, width):
        acc = np.zeros((height, width))
        cnt = np.zeros((height, width), dtype=np.int64)
        N = values.shape[1]
        # offset-major order matches the accumulation order of np.bincount
        for c in range(side):
            for r in range(side):
                j = c * side + r
                for i in range(N):
                    acc[rows[i] + r, cols[i] + c] += values[j, i]
                    cnt[rows[i] + r, cols[i] + c] += 1
        return acc, cnt


def _pick(name):
    if BACKEND == "numba":
        return globals()[name + "_numba"]
    return globals()[name + "_numpy"]


project_columns = _pick("project_columns")
hard_threshold_columns = _pick("hard_threshold_columns")
select_sparsity_columns = _pick("select_sparsity")
overlap_add = _pick("overlap_add")
