"""Convolution, pooling, resize and blur ops (im2col + BLAS matmul)."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .array import Array, record


def conv2d(x: Array, w: Array, bias: Array | None = None,
           stride: int = 1, padding: int = 0) -> Array:
    """Cross-correlate x[Cin,H,W] (or [N,Cin,H,W]) with w[Cout,Cin,k,k]."""
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or w.data.ndim != 4:
        raise ValueError(f"conv2d expects [N,Cin,H,W] and [Cout,Cin,k,k], "
                         f"got {x.data.shape} and {w.data.shape}")
    n, cin, h, wd_ = xd.shape
    cout, cin_w, k, k2 = w.data.shape
    if k != k2 or cin != cin_w:
        raise ValueError(f"conv2d dimension mismatch: input {xd.shape} vs weights {w.data.shape}")
    if h + 2 * padding < k or wd_ + 2 * padding < k:
        raise ValueError(f"conv2d input {xd.shape} too small for kernel {k} at padding {padding}")

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    # [N,Ho,Wo,Cin,k,k] -> (N*Ho*Wo, Cin*k*k)
    patches = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, cin * k * k)
    wmat = w.data.reshape(cout, cin * k * k)
    out_data = (patches @ wmat.T).reshape(n, ho, wo, cout).transpose(0, 3, 1, 2)
    if bias is not None:
        out_data = out_data + bias.data[None, :, None, None]
    out = Array(out_data[0] if squeeze else out_data)

    def bwd(g):
        gm = (g[None] if squeeze else g).transpose(0, 2, 3, 1).reshape(n * ho * wo, cout)
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(gm.sum(axis=0))
        if w.requires_grad:
            w.accumulate_grad((gm.T @ patches).reshape(w.data.shape))
        if x.requires_grad:
            cols = (gm @ wmat).reshape(n, ho, wo, cin, k, k)
            buf = np.zeros_like(xp)
            for di in range(k):
                for dj in range(k):
                    buf[:, :, di:di + ho * stride:stride, dj:dj + wo * stride:stride] += \
                        cols[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
            gx = buf[:, :, padding:padding + h, padding:padding + wd_] if padding else buf
            x.accumulate_grad(gx[0] if squeeze else gx)

    inputs = (x, w) if bias is None else (x, w, bias)
    record(inputs, (out,), bwd)
    return out


def conv3d(x: Array, w: Array, bias: Array | None = None,
           stride: int = 1, padding: int = 0) -> Array:
    """Cross-correlate x[Cin,D,H,W] with w[Cout,Cin,k,k,k]."""
    if x.data.ndim != 4 or w.data.ndim != 5:
        raise ValueError(f"conv3d expects [Cin,D,H,W] and [Cout,Cin,k,k,k], "
                         f"got {x.data.shape} and {w.data.shape}")
    cin, d, h, wd_ = x.data.shape
    cout, cin_w, k, k2, k3 = w.data.shape
    if not (k == k2 == k3) or cin != cin_w:
        raise ValueError(f"conv3d dimension mismatch: input {x.data.shape} vs weights {w.data.shape}")
    if min(d, h, wd_) + 2 * padding < k:
        raise ValueError(f"conv3d input {x.data.shape} too small for kernel {k} at padding {padding}")

    xp = np.pad(x.data, ((0, 0),) + ((padding, padding),) * 3)
    win = sliding_window_view(xp, (k, k, k), axis=(1, 2, 3))[:, ::stride, ::stride, ::stride]
    do, ho, wo = win.shape[1], win.shape[2], win.shape[3]
    patches = np.ascontiguousarray(win.transpose(1, 2, 3, 0, 4, 5, 6)).reshape(do * ho * wo, cin * k ** 3)
    wmat = w.data.reshape(cout, cin * k ** 3)
    out_data = (patches @ wmat.T).reshape(do, ho, wo, cout).transpose(3, 0, 1, 2)
    if bias is not None:
        out_data = out_data + bias.data[:, None, None, None]
    out = Array(out_data)

    def bwd(g):
        gm = g.transpose(1, 2, 3, 0).reshape(do * ho * wo, cout)
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(gm.sum(axis=0))
        if w.requires_grad:
            w.accumulate_grad((gm.T @ patches).reshape(w.data.shape))
        if x.requires_grad:
            cols = (gm @ wmat).reshape(do, ho, wo, cin, k, k, k)
            buf = np.zeros_like(xp)
            for di in range(k):
                for dj in range(k):
                    for dl in range(k):
                        buf[:, di:di + do * stride:stride,
                            dj:dj + ho * stride:stride,
                            dl:dl + wo * stride:stride] += \
                            cols[:, :, :, :, di, dj, dl].transpose(3, 0, 1, 2)
            gx = buf[:, padding:padding + d, padding:padding + h, padding:padding + wd_] \
                if padding else buf
            x.accumulate_grad(gx)

    inputs = (x, w) if bias is None else (x, w, bias)
    record(inputs, (out,), bwd)
    return out


def avg_pool2d(x: Array, factor: int = 2) -> Array:
    """Non-overlapping mean pooling over factor x factor blocks of x[C,H,W]."""
    c, h, w = x.data.shape
    if h % factor or w % factor:
        raise ValueError(f"avg_pool2d: {h}x{w} not divisible by {factor}")
    ho, wo = h // factor, w // factor
    out = Array(x.data.reshape(c, ho, factor, wo, factor).mean(axis=(2, 4)))

    def bwd(g):
        gx = np.repeat(np.repeat(g, factor, axis=1), factor, axis=2) / (factor * factor)
        x.accumulate_grad(gx)

    record((x,), (out,), bwd)
    return out


def _resize_axis_weights(n_in: int, n_out: int):
    # Half-integer pixel centers; border texels replicate.
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    i0 = np.clip(np.floor(src).astype(np.int64), 0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = np.clip(src - np.floor(src), 0.0, 1.0)
    f[src < 0] = 0.0
    return i0, i1, f


def resize_bilinear(x: Array, out_hw: tuple[int, int]) -> Array:
    """Separable bilinear resize of x[C,H,W] to [C,Ho,Wo]."""
    c, h, w = x.data.shape
    ho, wo = out_hw
    r0, r1, fr = _resize_axis_weights(h, ho)
    c0, c1, fc = _resize_axis_weights(w, wo)
    rows = x.data[:, r0, :] * (1.0 - fr)[None, :, None] + x.data[:, r1, :] * fr[None, :, None]
    out_data = rows[:, :, c0] * (1.0 - fc)[None, None, :] + rows[:, :, c1] * fc[None, None, :]
    out = Array(out_data)

    def bwd(g):
        grows = np.zeros((c, ho, w), dtype=g.dtype)
        np.add.at(grows, (slice(None), slice(None), c0), g * (1.0 - fc)[None, None, :])
        np.add.at(grows, (slice(None), slice(None), c1), g * fc[None, None, :])
        gx = np.zeros_like(x.data)
        np.add.at(gx, (slice(None), r0, slice(None)), grows * (1.0 - fr)[None, :, None])
        np.add.at(gx, (slice(None), r1, slice(None)), grows * fr[None, :, None])
        x.accumulate_grad(gx)

    record((x,), (out,), bwd)
    return out


def gaussian_kernel1d(sigma: float, radius: int) -> np.ndarray:
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def gaussian_blur2d(x: Array, sigma: float = 1.5, radius: int = 5) -> Array:
    """Separable Gaussian blur of x[C,H,W], zero padding.

    The kernel is symmetric, so the adjoint is the same blur.
    """
    k = gaussian_kernel1d(sigma, radius).astype(x.data.dtype)

    def blur(a):
        b = ndimage.correlate1d(a, k, axis=-1, mode="constant", cval=0.0)
        return ndimage.correlate1d(b, k, axis=-2, mode="constant", cval=0.0)

    out = Array(blur(x.data))

    def bwd(g):
        x.accumulate_grad(blur(g))

    record((x,), (out,), bwd)
    return out
