"""Closed-form transform update.

For fixed codes ``X`` the transform subproblem

    min_W ||W Y - X||_F^2 + lam * xi * ||W||_F^2 - lam * log|det W|

has the global minimizer

    W = 0.5 * R (S + (S^2 + 2 lam I)^(1/2)) Q^T L^{-1}

where ``L L^T = Y Y^T + lam xi I`` and ``L^{-1} Y X^T = Q S R^T``.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from xform.linalg import SINGULAR_RTOL, cholesky_factor, condition_number, full_svd, pd_inverse_sqrt


def _as_array(X):
    return np.asarray(getattr(X, "data", X), dtype=float)


@dataclass(frozen=True)
class UpdateContext:
    """Per-training-set precomputation shared by every transform update.

    Attributes
    ----------
    L_inv : ndarray, shape (n, n)
        Inverse of a factor ``L`` with ``L L^T = Y Y^T + lam xi I``.
    lam, xi : float
        Regularization weights (both > 0).
    YYt : ndarray, shape (n, n)
        Cached Gram matrix of the training signals.
    YXt : ndarray or None
        Optional cached ``Y X^T`` for a specific code matrix.
    """

    L_inv: np.ndarray
    lam: float
    xi: float
    YYt: np.ndarray
    YXt: Optional[np.ndarray] = field(default=None, compare=False)

    @classmethod
    def from_signals(cls, Y, lam, xi, factor="sqrt"):
        """Build the context for signals `Y`.

        `factor` selects the square root of ``Y Y^T + lam xi I``: ``"sqrt"``
        (symmetric, via eigendecomposition) or ``"cholesky"``. The update
        does not depend on this choice.
        """
        if not (lam > 0 and xi > 0):
            raise ValueError("lam and xi must be positive")
        Y = np.asarray(Y, dtype=float)
        if not np.all(np.isfinite(Y)):
            raise ValueError("non-finite matrix")
        n = Y.shape[0]
        YYt = Y @ Y.T
        S = YYt + lam * xi * np.eye(n)
        if factor == "sqrt":
            L_inv = pd_inverse_sqrt(S)
        elif factor == "cholesky":
            L = cholesky_factor(S)
            L_inv = solve_triangular(L, np.eye(n), lower=True)
        else:
            raise ValueError(f"unknown factor {factor!r}")
        return cls(L_inv, float(lam), float(xi), YYt)

    def with_codes(self, Y, X):
        return UpdateContext(self.L_inv, self.lam, self.xi, self.YYt,
                             np.asarray(Y, dtype=float) @ _as_array(X).T)


def singular_value_map(sigma, lam):
    """Positive root of ``gamma^2 - sigma * gamma - lam / 2 = 0``.

    Works elementwise on arrays.
    """
    sigma = np.asarray(sigma, dtype=float)
    if lam <= 0:
        raise ValueError("lam must be positive")
    if np.any(sigma < 0):
        raise ValueError("singular values must be nonnegative")
    gamma = 0.5 * (sigma + np.sqrt(sigma * sigma + 2.0 * lam))
    return float(gamma) if gamma.ndim == 0 else gamma


def _check_dims(Y, X):
    if Y.ndim != 2 or X.shape != Y.shape:
        raise ValueError(f"dimension mismatch: Y {Y.shape}, X {X.shape}")


def update_transform(Y, X, ctx):
    """Global minimizer of the transform subproblem for codes `X`.

    When ``L^{-1} Y X^T`` is singular the minimizer is not unique; the one
    induced by the computed SVD is returned.
    """
    Y = np.asarray(Y, dtype=float)
    X = _as_array(X)
    _check_dims(Y, X)
    if ctx.L_inv.shape[0] != Y.shape[0]:
        raise ValueError("context does not match the signal dimension")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite matrix")
    YXt = ctx.YXt if ctx.YXt is not None else Y @ X.T
    Q, sigma, R = full_svd(ctx.L_inv @ YXt)
    gamma = singular_value_map(sigma, ctx.lam)
    return ((R * gamma) @ Q.T) @ ctx.L_inv


def update_transform_orthonormal(Y, X, xi=0.5):
    """Maximize ``tr(W Y X^T)`` over ``W^T W = I / (2 xi)``.

    With the default ``xi = 0.5`` this is the orthonormal Procrustes
    solution ``V U^T`` for ``Y X^T = U S V^T``.
    """
    Y = np.asarray(Y, dtype=float)
    X = _as_array(X)
    _check_dims(Y, X)
    U, _, R = full_svd(Y @ X.T)
    return (R @ U.T) / np.sqrt(2.0 * xi)


def transform_objective(W, Y, X, lam, xi):
    """Transform-subproblem objective; ``inf`` for singular `W`."""
    W = np.asarray(W, dtype=float)
    sv = np.linalg.svd(W, compute_uv=False)
    if sv[-1] <= SINGULAR_RTOL * sv[0]:
        return np.inf
    fit = np.linalg.norm(W @ np.asarray(Y, dtype=float) - _as_array(X)) ** 2
    return float(fit + lam * xi * np.sum(sv * sv) - lam * np.sum(np.log(sv)))


def transform_update_gradient(W, Y, X, lam, xi):
    """Gradient ``2 W Y Y^T - 2 X Y^T + 2 lam xi W - lam W^{-T}``.

    Vanishes at every stationary point of the transform subproblem, in
    particular at the closed-form update.
    """
    W = np.asarray(W, dtype=float)
    Y = np.asarray(Y, dtype=float)
    X = _as_array(X)
    if not np.isfinite(condition_number(W)):
        raise ValueError("singular transform")
    W_invT = np.linalg.inv(W).T
    return 2.0 * W @ (Y @ Y.T) - 2.0 * X @ Y.T + 2.0 * lam * xi * W - lam * W_invT
