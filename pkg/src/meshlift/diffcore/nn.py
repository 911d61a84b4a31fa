"""Shallow-MLP forward pass and parameter initializers."""

from __future__ import annotations

import numpy as np

from . import ops
from .array import Array, default_dtype

_ACTIVATIONS = {
    "linear": lambda x: x,
    "relu": ops.relu,
    "leaky_relu": ops.leaky_relu,
    "tanh": ops.tanh,
}


def mlp_forward(x: Array, layers) -> Array:
    """Apply (weights[Din,Dout], bias[Dout]|None, activation) layers to x[N,Din]."""
    if x.data.ndim != 2:
        raise ValueError(f"mlp input must be [N,Din], got {x.data.shape}")
    h = x
    for li, (w, b, act) in enumerate(layers):
        if w.data.ndim != 2 or h.data.shape[1] != w.data.shape[0]:
            raise ValueError(f"layer {li}: input width {h.data.shape[1]} does not chain "
                             f"into weights {w.data.shape}")
        if act not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {act!r}")
        h = ops.matmul(h, w)
        if b is not None:
            if b.data.shape != (w.data.shape[1],):
                raise ValueError(f"layer {li}: bias shape {b.data.shape} != ({w.data.shape[1]},)")
            h = ops.add_rowvec(h, b)
        h = _ACTIVATIONS[act](h)
    return h


def he_init(rng: np.random.Generator, shape, fan_in: int) -> Array:
    """He-normal weight initialization, as a trainable Array."""
    std = np.sqrt(2.0 / fan_in)
    w = rng.standard_normal(shape) * std
    return Array(w.astype(default_dtype()), requires_grad=True)


def zeros_param(shape) -> Array:
    return Array(np.zeros(shape, dtype=default_dtype()), requires_grad=True)
