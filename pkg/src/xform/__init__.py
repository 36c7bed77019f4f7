"""Square sparsifying transform learning with closed-form updates."""

from xform._kernels import BACKEND
from xform.denoise import DenoiseConfig, denoise_image
from xform.learning import LearnConfig, learn, lower_bound_v0, objective, regularizer_v
from xform.sparse_coding import Constrained, Penalized, sparse_code
from xform.transform_update import UpdateContext, update_transform, update_transform_orthonormal

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Constrained",
    "DenoiseConfig",
    "LearnConfig",
    "Penalized",
    "UpdateContext",
    "denoise_image",
    "learn",
    "lower_bound_v0",
    "objective",
    "regularizer_v",
    "sparse_code",
    "update_transform",
    "update_transform_orthonormal",
]
