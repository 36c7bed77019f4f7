"""Representation and image quality metrics."""

from dataclasses import dataclass

import numpy as np

from xform import _kernels
from xform.linalg import condition_number

# reported in place of +inf dB when the error vanishes
PSNR_CAP_DB = 300.0
_ZERO_ERROR = 1e-12


@dataclass(frozen=True)
class MetricsReport:
    sparsification_error: float
    nse: float
    recovery_psnr_db: float
    condition_number: float
    frobenius_norm: float

    FIELDS = ("sparsification_error", "nse", "recovery_psnr_db",
              "condition_number", "frobenius_norm")

    def as_row(self):
        return [getattr(self, f) for f in self.FIELDS]


def _arr(a):
    return np.asarray(getattr(a, "data", a), dtype=float)


def sparsification_error(W, Y, X):
    """``||W Y - X||_F^2``."""
    W, Y, X = _arr(W), _arr(Y), _arr(X)
    if W.shape[1] != Y.shape[0] or X.shape != (W.shape[0], Y.shape[1]):
        raise ValueError(f"dimension mismatch: W {W.shape}, Y {Y.shape}, X {X.shape}")
    return float(np.sum(np.square(W @ Y - X)))


def nse(W, Y, s):
    """Fraction of transform-domain energy lost by keeping `s` entries per column."""
    W, Y = _arr(W), _arr(Y)
    if W.shape[1] != Y.shape[0]:
        raise ValueError(f"dimension mismatch: W {W.shape}, Y {Y.shape}")
    Z = np.ascontiguousarray(W @ Y)
    energy = float(np.sum(Z * Z))
    if energy == 0.0:
        raise ValueError("degenerate data")
    n, N = Z.shape
    if not 0 <= s <= n:
        raise ValueError("invalid sparsity")
    X = _kernels.project_columns(Z, np.full(N, s, dtype=np.int64))
    return float(np.sum(np.square(Z - X))) / energy


def _psnr_from_error(peak, pixels, err_norm):
    if err_norm < _ZERO_ERROR:
        return PSNR_CAP_DB
    return float(20.0 * np.log10(peak * np.sqrt(pixels) / err_norm))


def recovery_psnr(W, Y, X, pixels):
    """PSNR of recovering `Y` as ``W^{-1} X``, with `pixels` the image size.

    Returns :data:`PSNR_CAP_DB` when the recovery is exact.
    """
    W, Y, X = _arr(W), _arr(Y), _arr(X)
    if pixels < 1:
        raise ValueError("pixel count must be >= 1")
    if not np.isfinite(condition_number(W)):
        raise ValueError("singular transform")
    err = np.linalg.norm(Y - np.linalg.solve(W, X))
    return _psnr_from_error(255.0, pixels, err)


def psnr(image_a, image_b, peak=255.0):
    a = np.asarray(image_a, dtype=float)
    b = np.asarray(image_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return _psnr_from_error(peak, a.size, float(np.linalg.norm(a - b)))


def metrics_report(W, Y, X, s, pixels):
    W = _arr(W)
    return MetricsReport(
        sparsification_error=sparsification_error(W, Y, X),
        nse=nse(W, Y, s),
        recovery_psnr_db=recovery_psnr(W, Y, X, pixels),
        condition_number=condition_number(W),
        frobenius_norm=float(np.linalg.norm(W)),
    )
