"""Alternating minimization for square sparsifying transforms.

The learner minimizes

    ||W Y - X||_F^2 + lam * (xi ||W||_F^2 - log|det W|) + sparsity term

by alternating the exact sparse-coding step with the closed-form
transform update. ``lam = lambda0 * ||Y||_F^2`` so that the learned
transform does not depend on the scale of the data.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Union

import numpy as np
from scipy.fft import dct

from xform.linalg import SINGULAR_RTOL
from xform.sparse_coding import (
    Constrained,
    Penalized,
    SparseCodeMatrix,
    SparsityMode,
    code_columns,
)
from xform.transform_update import UpdateContext, update_transform

log = logging.getLogger(__name__)

INIT_KINDS = ("dct", "klt", "identity", "random")

# relative objective change below which a transform update counts as a no-op
TIE_RTOL = 1e-12


@dataclass
class LearnConfig:
    """Settings for :func:`learn`.

    `init` is one of ``"dct"``, ``"klt"``, ``"identity"``, ``"random"``
    (i.i.d. normal entries with std 0.2 drawn from `seed`) or an explicit
    ``(n, n)`` array.
    """

    lambda0: float
    mode: SparsityMode
    xi: float = 1.0
    iterations: int = 100
    init: Union[str, np.ndarray] = "dct"
    seed: int = 0
    order: str = "update-first"
    stop_tol: Optional[float] = None

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise ValueError("lambda0 must be positive")
        if not self.xi > 0:
            raise ValueError("xi must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.order not in ("update-first", "code-first"):
            raise ValueError(f"unknown order {self.order!r}")
        if isinstance(self.init, str) and self.init not in INIT_KINDS:
            raise ValueError(f"unknown init {self.init!r}")
        if not isinstance(self.mode, (Constrained, Penalized)):
            raise TypeError("mode must be Constrained or Penalized")

    def lam(self, Y):
        return self.lambda0 * float(np.sum(np.square(Y)))


class TraceRecord(NamedTuple):
    iter: int
    objective: float
    sparsification_error: float
    condition_number: float
    frobenius_norm: float
    elapsed_ms: float


TRACE_FIELDS = TraceRecord._fields


@dataclass
class ConvergenceTrace:
    records: List[TraceRecord] = field(default_factory=list)
    # objective after every individual step (transform update or coding)
    half_steps: List[float] = field(default_factory=list)

    def append(self, record):
        self.records.append(record)

    @property
    def objectives(self):
        return np.array([r.objective for r in self.records])

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def __len__(self):
        return len(self.records)


class LearnResult(NamedTuple):
    W: np.ndarray
    X: SparseCodeMatrix
    trace: ConvergenceTrace


def _log_abs_det(sv):
    if sv[-1] <= SINGULAR_RTOL * sv[0]:
        return -np.inf
    return float(np.sum(np.log(sv)))


def regularizer_v(W, xi):
    """``xi ||W||_F^2 - log|det W|``; ``inf`` for singular `W`.

    The log-determinant is taken as the sum of log singular values.
    """
    sv = np.linalg.svd(np.asarray(W, dtype=float), compute_uv=False)
    logdet = _log_abs_det(sv)
    if not np.isfinite(logdet):
        return np.inf
    return float(xi * np.sum(sv * sv) - logdet)


def lower_bound_v0(n, xi):
    """Infimum of :func:`regularizer_v` over ``n x n`` matrices."""
    return n / 2.0 + (n / 2.0) * np.log(2.0 * xi)


def _sparsity_term(X, mode):
    n, N = X.shape
    nnz = np.count_nonzero(X, axis=0)
    if isinstance(mode, Constrained):
        return 0.0 if np.all(nnz <= mode.budgets(n, N)) else np.inf
    eta = mode.thresholds(N)
    return float(np.sum(eta * eta * nnz))


def objective(W, X, Y, config):
    """Learning objective at ``(W, X)``.

    Constrained mode adds a barrier that is ``inf`` when a column of `X`
    exceeds its budget; penalized mode adds ``sum_i eta_i^2 ||X_i||_0``.
    """
    W = np.asarray(W, dtype=float)
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(getattr(X, "data", X), dtype=float)
    if W.shape != (Y.shape[0], Y.shape[0]) or X.shape != Y.shape:
        raise ValueError("dimension mismatch")
    v = regularizer_v(W, config.xi)
    if not np.isfinite(v):
        return np.inf
    penalty = _sparsity_term(X, config.mode)
    if not np.isfinite(penalty):
        return np.inf
    fit = float(np.sum(np.square(W @ Y - X)))
    return fit + config.lam(Y) * v + penalty


def dct_matrix(m):
    """Orthonormal ``m``-point DCT-II matrix (rows are basis vectors)."""
    return dct(np.eye(m), norm="ortho", axis=0)


def init_transform(kind, Y=None, n=None, seed=0):
    """Initial transform of the requested kind.

    ``"dct"`` is the 2D separable DCT ``kron(D, D)`` for square patches,
    ``"klt"`` is the transpose of the left singular matrix of `Y`.
    """
    if n is None:
        if Y is None:
            raise ValueError("need Y or n")
        n = np.asarray(Y).shape[0]
    if kind == "dct":
        m = int(round(np.sqrt(n)))
        if m * m != n:
            raise ValueError(f"DCT init needs a perfect-square dimension, got {n}")
        D = dct_matrix(m)
        return np.kron(D, D)
    if kind == "klt":
        if Y is None:
            raise ValueError("KLT init needs training data")
        U, _, _ = np.linalg.svd(np.asarray(Y, dtype=float), full_matrices=True)
        return U.T.copy()
    if kind == "identity":
        return np.eye(n)
    if kind == "random":
        return np.random.default_rng(seed).normal(0.0, 0.2, size=(n, n))
    raise ValueError(f"unknown init {kind!r}")


class _Evaluator:
    """Objective pieces with ``lam`` and the mode fixed."""

    def __init__(self, lam, xi, mode):
        self.lam = lam
        self.xi = xi
        self.mode = mode

    def state(self, W):
        sv = np.linalg.svd(W, compute_uv=False)
        logdet = _log_abs_det(sv)
        v = self.xi * float(np.sum(sv * sv)) - logdet if np.isfinite(logdet) else np.inf
        kappa = float(sv[0] / sv[-1]) if sv[-1] > SINGULAR_RTOL * sv[0] else np.inf
        return v, kappa, float(np.sqrt(np.sum(sv * sv)))

    def total(self, Z, X, v):
        D = Z - X
        fit = float(np.vdot(D, D))
        return fit + self.lam * v + _sparsity_term(X, self.mode), fit


def learn(Y, config, X0=None):
    """Learn a square sparsifying transform for the columns of `Y`.

    Parameters
    ----------
    Y : ndarray, shape (n, N)
        Training signals as columns.
    config : LearnConfig
    X0 : ndarray, optional
        Initial codes for the update-first order. Defaults to the exact
        sparse code of the initial transform.

    Returns
    -------
    LearnResult
        Final transform, final codes and the per-iteration trace
        (record 0 is the initial point).
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or not np.all(np.isfinite(Y)):
        raise ValueError("training data must be a finite 2D array")
    n, N = Y.shape
    if isinstance(config.init, str):
        W = init_transform(config.init, Y, n, config.seed)
    else:
        W = np.array(config.init, dtype=float)
        if W.shape != (n, n):
            raise ValueError(f"initial transform has shape {W.shape}, expected {(n, n)}")
    mode = config.mode
    lam = config.lam(Y)
    ev = _Evaluator(lam, config.xi, mode)
    ctx = UpdateContext.from_signals(Y, lam, config.xi)

    t0 = time.perf_counter()
    trace = ConvergenceTrace()

    Z = W @ Y
    if X0 is None or config.order == "code-first":
        X = code_columns(Z, mode)
    else:
        X = np.array(getattr(X0, "data", X0), dtype=float)
        if X.shape != Y.shape:
            raise ValueError("X0 must match Y")
    v, kappa, fro = ev.state(W)
    obj, fit = ev.total(Z, X, v)
    trace.append(TraceRecord(0, obj, fit, kappa, fro, 0.0))

    code_first = config.order == "code-first"
    stalled = False
    for k in range(1, config.iterations + 1):
        if not stalled:
            if code_first and k > 1:
                X = code_columns(Z, mode)
                obj, fit = ev.total(Z, X, v)
                trace.half_steps.append(obj)
            W_new = update_transform(Y, X, ctx)
            Z_new = W_new @ Y
            v_new, kappa_new, fro_new = ev.state(W_new)
            half, half_fit = ev.total(Z_new, X, v_new)
            if half >= obj - TIE_RTOL * max(abs(obj), 1e-300):
                # no strict decrease: keep (W, X) so the iterates stay fixed
                stalled = True
                trace.half_steps.append(obj)
            else:
                W, Z, v, kappa, fro = W_new, Z_new, v_new, kappa_new, fro_new
                obj, fit = half, half_fit
                trace.half_steps.append(obj)
                if not code_first:
                    X = code_columns(Z, mode)
                    obj, fit = ev.total(Z, X, v)
                    trace.half_steps.append(obj)
        prev = trace.records[-1].objective
        trace.append(TraceRecord(k, obj, fit, kappa, fro,
                                 1e3 * (time.perf_counter() - t0)))
        if config.stop_tol is not None and abs(prev - obj) <= config.stop_tol * abs(prev):
            log.debug("stopping at iteration %d: relative change below %g", k, config.stop_tol)
            break

    return LearnResult(W, SparseCodeMatrix(X, mode), trace)
