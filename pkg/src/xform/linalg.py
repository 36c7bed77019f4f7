"""Dense factorizations used by the closed-form transform update."""

from typing import NamedTuple

import numpy as np

SINGULAR_RTOL = 1e-14


class SvdResult(NamedTuple):
    """Full SVD ``M = Q @ diag(Sigma) @ R.T``."""

    Q: np.ndarray
    Sigma: np.ndarray
    R: np.ndarray


def _check_finite(M):
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError("non-finite matrix")
    return M


def _check_square(M):
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")


def full_svd(M):
    """Full singular value decomposition of a square real matrix.

    Parameters
    ----------
    M : array_like, shape (n, n)

    Returns
    -------
    SvdResult
        ``Q`` and ``R`` orthonormal, ``Sigma`` nonnegative and descending.
    """
    M = _check_finite(M)
    _check_square(M)
    U, s, Vt = np.linalg.svd(M, full_matrices=True)
    return SvdResult(U, s, Vt.T)


def _symmetric_eig(S):
    S = _check_finite(S)
    _check_square(S)
    n = S.shape[0]
    if not np.allclose(S, S.T, rtol=0.0, atol=1e-12 * max(np.linalg.norm(S), 1e-300)):
        raise ValueError("matrix is not symmetric")
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    if w[0] <= SINGULAR_RTOL * np.trace(S) / n:
        raise ValueError("not positive definite")
    return w, V


def pd_inverse_sqrt(S):
    """Symmetric inverse square root ``S^(-1/2)`` of an SPD matrix.

    Computed from the symmetric eigendecomposition, so the result is
    itself symmetric and satisfies ``A @ S @ A.T == I``.
    """
    w, V = _symmetric_eig(S)
    A = (V / np.sqrt(w)) @ V.T
    return 0.5 * (A + A.T)


def cholesky_factor(S):
    """Lower-triangular ``L`` with ``L @ L.T == S``."""
    _symmetric_eig(S)
    return np.linalg.cholesky(0.5 * (S + S.T))


def singular_values(W):
    W = _check_finite(W)
    _check_square(W)
    return np.linalg.svd(W, compute_uv=False)


def condition_number(W):
    """Ratio of largest to smallest singular value; ``inf`` when singular."""
    sv = singular_values(W)
    if sv.size == 0 or sv[0] == 0.0 or sv[-1] < SINGULAR_RTOL * sv[0]:
        return np.inf
    return float(sv[0] / sv[-1])
