"""Minimal reverse-mode automatic differentiation over dense arrays."""

from . import ops
from .array import (Array, Tape, active_tape, as_array, backward,
                    default_dtype, record, set_default_dtype)
from .conv import (avg_pool2d, conv2d, conv3d, gaussian_blur2d,
                   gaussian_kernel1d, resize_bilinear)
from .nn import he_init, mlp_forward, zeros_param
from .sample import bilinear_sample, trilinear_interp

__all__ = [
    "Array", "Tape", "active_tape", "as_array", "backward", "record",
    "default_dtype", "set_default_dtype", "ops",
    "conv2d", "conv3d", "avg_pool2d", "resize_bilinear", "gaussian_blur2d",
    "gaussian_kernel1d", "bilinear_sample", "trilinear_interp",
    "mlp_forward", "he_init", "zeros_param",
]
