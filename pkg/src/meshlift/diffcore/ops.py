"""Elementwise, reduction, shape and gather operations on tape Arrays.

Binary ops require identical shapes (Python scalars are allowed); the only
broadcasting in the core is the bias addition in add_rowvec and the conv
ops. Explicit reshapes everywhere else.
"""

from __future__ import annotations

import numpy as np

from .array import Array, as_array, record


def _binary_shapes(a: Array, b: Array) -> None:
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")


def _coerce(a, b):
    a = as_array(a) if not isinstance(a, Array) else a
    if isinstance(b, (int, float, np.floating, np.integer)):
        b = Array(np.full_like(a.data, float(b)))
    elif not isinstance(b, Array):
        b = as_array(b)
    return a, b


def add(a, b) -> Array:
    a, b = _coerce(a, b)
    _binary_shapes(a, b)
    out = Array(a.data + b.data)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g)

    record((a, b), (out,), bwd)
    return out


def sub(a, b) -> Array:
    a, b = _coerce(a, b)
    _binary_shapes(a, b)
    out = Array(a.data - b.data)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(-g)

    record((a, b), (out,), bwd)
    return out


def mul(a, b) -> Array:
    a, b = _coerce(a, b)
    _binary_shapes(a, b)
    out = Array(a.data * b.data)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * b.data)
        if b.requires_grad:
            b.accumulate_grad(g * a.data)

    record((a, b), (out,), bwd)
    return out


def div(a, b) -> Array:
    a, b = _coerce(a, b)
    _binary_shapes(a, b)
    out = Array(a.data / b.data)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g / b.data)
        if b.requires_grad:
            b.accumulate_grad(-g * a.data / (b.data * b.data))

    record((a, b), (out,), bwd)
    return out


def neg(a: Array) -> Array:
    out = Array(-a.data)

    def bwd(g):
        a.accumulate_grad(-g)

    record((a,), (out,), bwd)
    return out


def exp(a: Array) -> Array:
    out = Array(np.exp(a.data))

    def bwd(g):
        a.accumulate_grad(g * out.data)

    record((a,), (out,), bwd)
    return out


def log(a: Array) -> Array:
    out = Array(np.log(a.data))

    def bwd(g):
        a.accumulate_grad(g / a.data)

    record((a,), (out,), bwd)
    return out


def sqrt(a: Array) -> Array:
    out = Array(np.sqrt(a.data))

    def bwd(g):
        a.accumulate_grad(g * (0.5 / out.data))

    record((a,), (out,), bwd)
    return out


def tanh(a: Array) -> Array:
    out = Array(np.tanh(a.data))

    def bwd(g):
        a.accumulate_grad(g * (1.0 - out.data * out.data))

    record((a,), (out,), bwd)
    return out


def absolute(a: Array) -> Array:
    """|a| with sign(0) = 0 subgradient."""
    out = Array(np.abs(a.data))

    def bwd(g):
        a.accumulate_grad(g * np.sign(a.data))

    record((a,), (out,), bwd)
    return out


def relu(a: Array) -> Array:
    out = Array(np.maximum(a.data, 0.0))

    def bwd(g):
        a.accumulate_grad(g * (a.data > 0.0))

    record((a,), (out,), bwd)
    return out


def leaky_relu(a: Array, alpha: float = 0.1) -> Array:
    out = Array(np.where(a.data > 0.0, a.data, alpha * a.data))

    def bwd(g):
        a.accumulate_grad(g * np.where(a.data > 0.0, 1.0, alpha))

    record((a,), (out,), bwd)
    return out


def clamp(a: Array, lo: float, hi: float) -> Array:
    out = Array(np.clip(a.data, lo, hi))

    def bwd(g):
        inside = (a.data > lo) & (a.data < hi)
        a.accumulate_grad(g * inside)

    record((a,), (out,), bwd)
    return out


def pow_const(a: Array, p: float) -> Array:
    """a**p for a real exponent; caller guarantees a > 0 when p is fractional."""
    out = Array(np.power(a.data, p))

    def bwd(g):
        a.accumulate_grad(g * p * np.power(a.data, p - 1.0))

    record((a,), (out,), bwd)
    return out


def total(a: Array) -> Array:
    """Sum of all elements, as a scalar Array."""
    out = Array(np.sum(a.data, dtype=a.data.dtype))

    def bwd(g):
        a.accumulate_grad(np.full_like(a.data, g.reshape(())))

    record((a,), (out,), bwd)
    return out


def mean(a: Array) -> Array:
    n = a.data.size
    out = Array(np.sum(a.data, dtype=a.data.dtype) / n)

    def bwd(g):
        a.accumulate_grad(np.full_like(a.data, g.reshape(()) / n))

    record((a,), (out,), bwd)
    return out


def reshape(a: Array, shape) -> Array:
    out = Array(a.data.reshape(shape))

    def bwd(g):
        a.accumulate_grad(g.reshape(a.data.shape))

    record((a,), (out,), bwd)
    return out


def getitem(a: Array, idx) -> Array:
    """Basic (slice / integer) indexing; backward scatters into the slice."""
    out = Array(a.data[idx])

    def bwd(g):
        buf = np.zeros_like(a.data)
        buf[idx] = g.reshape(buf[idx].shape)
        a.accumulate_grad(buf)

    record((a,), (out,), bwd)
    return out


def matmul(a: Array, b: Array) -> Array:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shapes incompatible: {a.data.shape} @ {b.data.shape}")
    out = Array(a.data @ b.data)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.T)
        if b.requires_grad:
            b.accumulate_grad(a.data.T @ g)

    record((a, b), (out,), bwd)
    return out


def add_rowvec(a: Array, bias: Array) -> Array:
    """a[N, M] + bias[M], the one sanctioned broadcast (bias addition)."""
    if a.data.ndim != 2 or bias.data.shape != (a.data.shape[1],):
        raise ValueError(f"add_rowvec: {a.data.shape} + {bias.data.shape}")
    out = Array(a.data + bias.data[None, :])

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=0))

    record((a, bias), (out,), bwd)
    return out


def take0(a: Array, indices: np.ndarray) -> Array:
    """Gather rows along axis 0; backward scatter-adds."""
    idx = np.asarray(indices, dtype=np.int64)
    out = Array(a.data[idx])

    def bwd(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        a.accumulate_grad(buf)

    record((a,), (out,), bwd)
    return out


def segment_sum0(a: Array, segment_ids: np.ndarray, num_segments: int) -> Array:
    """Sum rows of a into num_segments bins along axis 0."""
    seg = np.asarray(segment_ids, dtype=np.int64)
    if seg.shape[0] != a.data.shape[0]:
        raise ValueError("segment_ids length must match axis 0")
    out_data = np.zeros((num_segments,) + a.data.shape[1:], dtype=a.data.dtype)
    np.add.at(out_data, seg, a.data)
    out = Array(out_data)

    def bwd(g):
        a.accumulate_grad(g[seg])

    record((a,), (out,), bwd)
    return out


def concat0(parts: list[Array]) -> Array:
    out = Array(np.concatenate([p.data for p in parts], axis=0))
    sizes = [p.data.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p.accumulate_grad(g[lo:hi])

    record(tuple(parts), (out,), bwd)
    return out


def linear_combination(terms: list[tuple[float, Array]]) -> Array:
    """Weighted sum of same-shape Arrays (used to assemble losses)."""
    if not terms:
        raise ValueError("empty combination")
    out_data = None
    for w, t in terms:
        out_data = w * t.data if out_data is None else out_data + w * t.data
    out = Array(out_data)

    def bwd(g):
        for w, t in terms:
            if t.requires_grad:
                t.accumulate_grad(w * g)

    record(tuple(t for _, t in terms), (out,), bwd)
    return out
