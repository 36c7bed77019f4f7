"""Image <-> patch-matrix conversion.

Patches are enumerated in raster order of their top-left corners and
each ``p x p`` patch is vectorized column by column, so entry
``c * p + r`` of a column holds pixel ``(r0 + r, c0 + c)``.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from xform import _kernels


@dataclass
class PatchSet:
    vectors: np.ndarray      # (n, N), n = patch_side ** 2
    means: np.ndarray        # (N,), zeros when means were kept
    origins: np.ndarray      # (N, 2) int, top-left (row, col)
    patch_side: int
    stride: int
    image_shape: tuple

    @property
    def n(self):
        return self.patch_side ** 2

    def __len__(self):
        return self.vectors.shape[1]


def as_image(img):
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError(f"expected a 2D grayscale image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image has non-finite pixels")
    return img


def extract_patches(img, patch_side, stride=1, remove_mean=True):
    """Extract all ``patch_side x patch_side`` patches on a `stride` grid.

    With ``stride == patch_side`` trailing rows/columns that do not fill a
    whole patch are dropped.
    """
    img = as_image(img)
    H, W = img.shape
    if patch_side < 1 or stride < 1:
        raise ValueError("patch_side and stride must be >= 1")
    if patch_side > min(H, W):
        raise ValueError(f"patch of side {patch_side} does not fit a {H}x{W} image")
    win = sliding_window_view(img, (patch_side, patch_side))[::stride, ::stride]
    nr, nc = win.shape[:2]
    vectors = np.array(
        win.transpose(0, 1, 3, 2).reshape(nr * nc, patch_side * patch_side).T, order="C")
    rr, cc = np.meshgrid(np.arange(nr) * stride, np.arange(nc) * stride, indexing="ij")
    origins = np.stack([rr.ravel(), cc.ravel()], axis=1).astype(np.int64)
    if remove_mean:
        means = vectors.mean(axis=0)
        vectors -= means[None, :]
    else:
        means = np.zeros(vectors.shape[1])
    return PatchSet(vectors, means, origins, patch_side, stride, (H, W))


def assemble_image(patches, restored_vectors=None, height=None, width=None):
    """Average (mean-restored) patch vectors back into an image.

    Every pixel must be covered by at least one patch.
    """
    vec = patches.vectors if restored_vectors is None else np.asarray(restored_vectors, dtype=float)
    if vec.shape != patches.vectors.shape:
        raise ValueError(f"dimension mismatch: {vec.shape} vs {patches.vectors.shape}")
    H = patches.image_shape[0] if height is None else height
    W = patches.image_shape[1] if width is None else width
    values = np.ascontiguousarray(vec + patches.means[None, :])
    acc, cnt = _kernels.overlap_add(values,
                                    np.ascontiguousarray(patches.origins[:, 0]),
                                    np.ascontiguousarray(patches.origins[:, 1]),
                                    patches.patch_side, H, W)
    if np.any(cnt == 0):
        raise ValueError(f"{int(np.sum(cnt == 0))} pixels are not covered by any patch")
    return acc / cnt
