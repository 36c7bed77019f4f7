"""Exact transform-domain sparse coding.

Two subproblems are solved column by column:

* constrained: ``min ||W Y_i - x||^2  s.t. ||x||_0 <= s``, solved by
  keeping the ``s`` largest-magnitude entries (lowest index wins ties);
* penalized: ``min ||W Y_i - x||^2 + eta_i^2 ||x||_0``, solved by hard
  thresholding at ``eta_i`` (entries with ``|b| == eta`` are kept).
"""

from dataclasses import dataclass
from typing import Union

import numpy as np

from xform import _kernels


@dataclass(frozen=True)
class Constrained:
    """Per-column sparsity budget; an int or one integer per column."""

    s: Union[int, np.ndarray]

    def budgets(self, n, N):
        s = np.broadcast_to(np.asarray(self.s, dtype=np.int64), (N,))
        if np.any(s < 0) or np.any(s > n):
            raise ValueError("invalid sparsity")
        return np.ascontiguousarray(s)


@dataclass(frozen=True)
class Penalized:
    """Per-column l0 penalty weights ``eta_i`` (scalar broadcasts)."""

    eta: Union[float, np.ndarray]

    def thresholds(self, N):
        eta = np.broadcast_to(np.asarray(self.eta, dtype=float), (N,))
        if not np.all(eta > 0):
            raise ValueError("invalid threshold")
        return np.ascontiguousarray(eta)


SparsityMode = Union[Constrained, Penalized]


@dataclass
class SparseCodeMatrix:
    data: np.ndarray
    mode: SparsityMode

    def satisfies_mode(self):
        n, N = self.data.shape
        if isinstance(self.mode, Constrained):
            nnz = np.count_nonzero(self.data, axis=0)
            return bool(np.all(nnz <= self.mode.budgets(n, N)))
        eta = self.mode.thresholds(N)
        nz = self.data != 0
        return bool(np.all(np.abs(self.data)[nz] >= np.broadcast_to(eta, (n, N))[nz]))


def project_s_sparse(z, s):
    """Project `z` onto the set of vectors with at most `s` nonzeros.

    Examples
    --------
    >>> project_s_sparse([3.0, -1.0, 0.0, 2.0], 2)
    array([3., 0., 0., 2.])
    >>> project_s_sparse([1.0, -1.0], 1)
    array([1., 0.])
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise ValueError("expected a vector")
    if not 0 <= s <= z.size:
        raise ValueError("invalid sparsity")
    Z = np.ascontiguousarray(z[:, None])
    return _kernels.project_columns(Z, np.array([s], dtype=np.int64))[:, 0]


def hard_threshold(b, eta):
    """Zero the entries of `b` with magnitude strictly below `eta`."""
    if not eta > 0:
        raise ValueError("invalid threshold")
    b = np.asarray(b, dtype=float)
    B = np.ascontiguousarray(b[:, None])
    return _kernels.hard_threshold_columns(B, np.array([float(eta)]))[:, 0]


def code_columns(Z, mode):
    """Apply the sparse-coding operator of `mode` to each column of `Z`."""
    Z = np.ascontiguousarray(Z, dtype=float)
    n, N = Z.shape
    if isinstance(mode, Constrained):
        return _kernels.project_columns(Z, mode.budgets(n, N))
    if isinstance(mode, Penalized):
        return _kernels.hard_threshold_columns(Z, mode.thresholds(N))
    raise TypeError(f"unknown sparsity mode {mode!r}")


def sparse_code(W, Y, mode):
    """Exact global minimizer ``X`` of the sparse-coding subproblem for ``W Y``."""
    W = np.asarray(W, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if W.ndim != 2 or Y.ndim != 2 or W.shape[0] != W.shape[1] or W.shape[1] != Y.shape[0]:
        raise ValueError(f"dimension mismatch: W {W.shape}, Y {Y.shape}")
    return SparseCodeMatrix(code_columns(W @ Y, mode), mode)
