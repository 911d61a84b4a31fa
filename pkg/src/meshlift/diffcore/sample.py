"""Differentiable bilinear / trilinear interpolation.

Image maps use half-integer pixel centers: texel (i, j) covers
[i, i+1) x [j, j+1) with its center at (i+0.5, j+0.5). Volume grids are
node-centered: grid node i sits exactly at coordinate i. Queries whose
support texels/nodes fall outside the array contribute the out-of-view
value (default 0), never a fault.
"""

from __future__ import annotations

import numpy as np

from .array import Array, record


def _scatter_channels(buf: np.ndarray, flat_idx: np.ndarray, contrib: np.ndarray) -> None:
    # buf: [C, M] flattened spatial; contrib: [C, N] with duplicate indices.
    m = buf.shape[1]
    for c in range(buf.shape[0]):
        buf[c] += np.bincount(flat_idx, weights=contrib[c], minlength=m)


def bilinear_sample(map_: Array, uv, oov: float = 0.0) -> Array:
    """Sample map_[C,H,W] at continuous pixel coords uv[N,2] -> [N,C]."""
    uv_arr = uv if isinstance(uv, Array) else None
    uvd = uv.data if isinstance(uv, Array) else np.asarray(uv, dtype=map_.data.dtype)
    if uvd.ndim != 2 or uvd.shape[1] != 2:
        raise ValueError(f"uv must be [N,2], got {uvd.shape}")
    c, h, w = map_.data.shape
    x = uvd[:, 0] - 0.5
    y = uvd[:, 1] - 0.5
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0

    n = uvd.shape[0]
    out_data = np.full((c, n), 0.0, dtype=map_.data.dtype)
    flat = map_.data.reshape(c, h * w)
    corners = []
    for dx, dy, wgt, dwx, dwy in (
        (0, 0, (1 - fx) * (1 - fy), -(1 - fy), -(1 - fx)),
        (1, 0, fx * (1 - fy), (1 - fy), -fx),
        (0, 1, (1 - fx) * fy, -fy, (1 - fx)),
        (1, 1, fx * fy, fy, fx),
    ):
        ix = x0 + dx
        iy = y0 + dy
        ok = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
        idx = np.where(ok, iy * w + ix, 0)
        vals = np.where(ok[None, :], flat[:, idx], oov)
        out_data += vals * wgt[None, :]
        corners.append((idx, ok, wgt, dwx, dwy, vals))
    out = Array(out_data.T)

    def bwd(g):
        gt = np.ascontiguousarray(g.T)  # [C, N]
        if map_.requires_grad:
            buf = np.zeros((c, h * w), dtype=map_.data.dtype)
            for idx, ok, wgt, _, _, _ in corners:
                _scatter_channels(buf, idx, gt * (wgt * ok)[None, :])
            map_.accumulate_grad(buf.reshape(map_.data.shape))
        if uv_arr is not None and uv_arr.requires_grad:
            gu = np.zeros(n, dtype=map_.data.dtype)
            gv = np.zeros(n, dtype=map_.data.dtype)
            for _, ok, _, dwx, dwy, vals in corners:
                dot = (gt * vals).sum(axis=0)
                gu += dot * dwx * ok
                gv += dot * dwy * ok
            uv_arr.accumulate_grad(np.stack([gu, gv], axis=1))

    inputs = (map_,) if uv_arr is None else (map_, uv_arr)
    record(inputs, (out,), bwd)
    return out


def trilinear_interp(grid: Array, xyz, oov: float = 0.0) -> Array:
    """Sample grid[C,R1,R2,R3] at continuous node coords xyz[N,3] -> [N,C].

    Coordinate k of axis a addresses grid node k exactly (no half-texel
    shift); a query at a node returns that node's value.
    """
    xyz_arr = xyz if isinstance(xyz, Array) else None
    pd = xyz.data if isinstance(xyz, Array) else np.asarray(xyz, dtype=grid.data.dtype)
    if pd.ndim != 2 or pd.shape[1] != 3:
        raise ValueError(f"xyz must be [N,3], got {pd.shape}")
    c, r1, r2, r3 = grid.data.shape
    base = np.floor(pd).astype(np.int64)
    frac = pd - base

    n = pd.shape[0]
    out_data = np.zeros((c, n), dtype=grid.data.dtype)
    flat = grid.data.reshape(c, r1 * r2 * r3)
    corners = []
    for dx in (0, 1):
        wx = frac[:, 0] if dx else 1 - frac[:, 0]
        for dy in (0, 1):
            wy = frac[:, 1] if dy else 1 - frac[:, 1]
            for dz in (0, 1):
                wz = frac[:, 2] if dz else 1 - frac[:, 2]
                ii = base[:, 0] + dx
                jj = base[:, 1] + dy
                kk = base[:, 2] + dz
                ok = ((ii >= 0) & (ii < r1) & (jj >= 0) & (jj < r2)
                      & (kk >= 0) & (kk < r3))
                idx = np.where(ok, (ii * r2 + jj) * r3 + kk, 0)
                vals = np.where(ok[None, :], flat[:, idx], oov)
                wgt = wx * wy * wz
                out_data += vals * wgt[None, :]
                corners.append((idx, ok, wgt, (dx, dy, dz), vals))
    out = Array(out_data.T)

    def bwd(g):
        gt = np.ascontiguousarray(g.T)
        if grid.requires_grad:
            buf = np.zeros((c, r1 * r2 * r3), dtype=grid.data.dtype)
            for idx, ok, wgt, _, _ in corners:
                _scatter_channels(buf, idx, gt * (wgt * ok)[None, :])
            grid.accumulate_grad(buf.reshape(grid.data.shape))
        if xyz_arr is not None and xyz_arr.requires_grad:
            gp = np.zeros((n, 3), dtype=grid.data.dtype)
            fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
            for _, ok, _, (dx, dy, dz), vals in corners:
                dot = (gt * vals).sum(axis=0) * ok
                wx = fx if dx else 1 - fx
                wy = fy if dy else 1 - fy
                wz = fz if dz else 1 - fz
                sx = 1.0 if dx else -1.0
                sy = 1.0 if dy else -1.0
                sz = 1.0 if dz else -1.0
                gp[:, 0] += dot * sx * wy * wz
                gp[:, 1] += dot * wx * sy * wz
                gp[:, 2] += dot * wx * wy * sz
            xyz_arr.accumulate_grad(gp)

    inputs = (grid,) if xyz_arr is None else (grid, xyz_arr)
    record(inputs, (out,), bwd)
    return out
