"""Software rasterizer and ground-truth sphere tracer.

The rasterizer produces depth/normal/mask maps with analytic gradients to
mesh vertex positions: interior depth through the perspective-correct
barycentric formula, normals through the face-normal algebra, and mask
through a signed screen-space distance ramp around silhouette edges (hard
coverage alone has no usable gradient). Background conventions: +inf depth,
zero normal, faceid -1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .geometry import Camera, ShapeSDF
from .isoext import Mesh, edge_face_counts

DEPTH_SENTINEL = np.inf
FACE_SENTINEL = -1
_Z_NEAR = 1e-6


@dataclass
class GBuffer:
    """Per-view geometric render targets.

    ``mask`` is the differentiable soft mask (hard coverage blended with the
    silhouette band); ``hard_mask`` is the plain coverage that pairs with the
    faceid/depth sentinels.
    """

    depth: dc.Array
    normal: dc.Array
    mask: dc.Array
    faceid: np.ndarray
    bary: np.ndarray
    hard_mask: np.ndarray

    @property
    def resolution(self) -> tuple[int, int]:
        return self.depth.data.shape


def scale_camera(camera: Camera, resolution: int) -> Camera:
    """Rescale intrinsics so the camera renders at a square resolution."""
    if camera.width == resolution and camera.height == resolution:
        return camera
    s = resolution / camera.width
    return Camera(fx=camera.fx * s, fy=camera.fy * s, cx=camera.cx * s,
                  cy=camera.cy * s, rotation=camera.rotation,
                  translation=camera.translation,
                  width=resolution, height=resolution)


def _background(h: int, w: int) -> GBuffer:
    return GBuffer(depth=dc.Array(np.full((h, w), DEPTH_SENTINEL)),
                   normal=dc.Array(np.zeros((3, h, w))),
                   mask=dc.Array(np.zeros((h, w))),
                   faceid=np.full((h, w), FACE_SENTINEL, dtype=np.int64),
                   bary=np.zeros((3, h, w)),
                   hard_mask=np.zeros((h, w)))


def _project_vertices(verts: np.ndarray, camera: Camera):
    pc = verts @ camera.rotation.T + camera.translation
    z = pc[:, 2]
    safe = np.maximum(z, _Z_NEAR)
    u = camera.fx * pc[:, 0] / safe + camera.cx
    v = camera.fy * pc[:, 1] / safe + camera.cy
    return np.stack([u, v], axis=1), z, pc


def _raster_core(verts: np.ndarray, tris: np.ndarray, camera: Camera,
                 h: int, w: int):
    """Coverage resolve. Returns winner arrays plus projection context."""
    screen, z, pc = _project_vertices(verts, camera)
    ok_tri = (z[tris] > _Z_NEAR).all(axis=1)
    p = screen[tris]  # [Nt,3,2]
    area2 = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    ok_tri &= np.abs(area2) > 1e-12

    tid = np.flatnonzero(ok_tri)
    ctx = {"screen": screen, "z": z, "pc": pc}
    if tid.size == 0:
        return None, ctx
    pt = p[tid]
    # Candidate pixels: centers inside each triangle's clipped bbox.
    x_lo = np.clip(np.ceil(pt[:, :, 0].min(axis=1) - 0.5), 0, w - 1).astype(np.int64)
    x_hi = np.clip(np.floor(pt[:, :, 0].max(axis=1) - 0.5), 0, w - 1).astype(np.int64)
    y_lo = np.clip(np.ceil(pt[:, :, 1].min(axis=1) - 0.5), 0, h - 1).astype(np.int64)
    y_hi = np.clip(np.floor(pt[:, :, 1].max(axis=1) - 0.5), 0, h - 1).astype(np.int64)
    bw = np.maximum(0, x_hi - x_lo + 1)
    bh = np.maximum(0, y_hi - y_lo + 1)
    counts = bw * bh
    keep = counts > 0
    tid, x_lo, y_lo, bw, bh, counts = (a[keep] for a in (tid, x_lo, y_lo, bw, bh, counts))
    if tid.size == 0:
        return None, ctx

    total = int(counts.sum())
    row = np.repeat(np.arange(tid.size), counts)
    local = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    px = x_lo[row] + local % bw[row]
    py = y_lo[row] + local // bw[row]
    cand_tri = tid[row]

    cx = px + 0.5
    cy = py + 0.5
    tv = tris[cand_tri]
    sx = screen[tv, 0]  # [M,3]
    sy = screen[tv, 1]
    # Edge functions: w_j = cross(p_b - p_a, c - p_a), (a, b) = (j+1, j+2).
    wgt = np.empty((total, 3))
    for j in range(3):
        a = (j + 1) % 3
        b = (j + 2) % 3
        wgt[:, j] = ((sx[:, b] - sx[:, a]) * (cy - sy[:, a])
                     - (sy[:, b] - sy[:, a]) * (cx - sx[:, a]))
    asign = np.sign(area2[cand_tri])
    inside = (wgt * asign[:, None] >= 0.0).all(axis=1)
    if not inside.any():
        return None, ctx

    px, py, cand_tri, wgt = px[inside], py[inside], cand_tri[inside], wgt[inside]
    lam = wgt / area2[cand_tri][:, None]
    zv = z[tris[cand_tri]]
    zinv = (lam / zv).sum(axis=1)
    depth = 1.0 / zinv
    pers = (lam / zv) * depth[:, None]  # perspective-correct barycentrics

    pix = py * w + px
    order = np.lexsort((cand_tri, depth, pix))
    pix_sorted = pix[order]
    first = np.unique(pix_sorted, return_index=True)[1]
    win = order[first]

    winners = {
        "pix": pix[win], "tri": cand_tri[win], "depth": depth[win],
        "lam": lam[win], "pers": pers[win], "zinv": zinv[win],
        "wgt": wgt[win], "area2": area2,
    }
    return winners, ctx


def _face_normals(verts: np.ndarray, tris: np.ndarray, cam_pos: np.ndarray):
    e1 = verts[tris[:, 1]] - verts[tris[:, 0]]
    e2 = verts[tris[:, 2]] - verts[tris[:, 0]]
    u = np.cross(e1, e2)
    norm = np.linalg.norm(u, axis=1, keepdims=True)
    norm[norm == 0] = 1.0
    n = u / norm
    centroid = verts[tris].mean(axis=1)
    flip = np.sign(((cam_pos - centroid) * n).sum(axis=1))
    flip[flip == 0] = 1.0
    return n, flip, u, norm[:, 0], e1, e2


def _silhouette_edges(verts: np.ndarray, tris: np.ndarray, screen: np.ndarray,
                      z: np.ndarray):
    """Screen-space silhouette segments: boundary edges plus edges whose two
    faces have opposite screen orientation."""
    if tris.shape[0] == 0:
        return np.zeros((0, 2), dtype=np.int64)
    p = screen[tris]
    area2 = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    front = area2 > 0
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    face_of_edge = np.tile(np.arange(tris.shape[0]), 3)
    uniq, inv, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
    sil = np.zeros(uniq.shape[0], dtype=bool)
    sil[counts == 1] = True
    # Two-face edges: orientation disagreement marks the silhouette.
    two = np.flatnonzero(counts == 2)
    if two.size:
        vote = np.zeros(uniq.shape[0], dtype=np.int64)
        np.add.at(vote, inv, np.where(front[face_of_edge], 1, -1))
        sil[two] = vote[two] == 0
    visible = (z[uniq] > _Z_NEAR).all(axis=1)
    return uniq[sil & visible]


def _soft_mask_data(hard: np.ndarray, seg_edges: np.ndarray, screen: np.ndarray,
                    band: float, h: int, w: int):
    """Blend hard coverage with a signed distance ramp near silhouettes.

    Returns (mask, assignment) where assignment carries per-affected-pixel
    winner segment data for the backward pass.
    """
    mask = hard.astype(np.float64).copy()
    if seg_edges.shape[0] == 0:
        return mask, None
    a = screen[seg_edges[:, 0]]
    b = screen[seg_edges[:, 1]]
    reach = band + 1.0
    x_lo = np.clip(np.floor(np.minimum(a[:, 0], b[:, 0]) - reach), 0, w - 1).astype(np.int64)
    x_hi = np.clip(np.ceil(np.maximum(a[:, 0], b[:, 0]) + reach), 0, w - 1).astype(np.int64)
    y_lo = np.clip(np.floor(np.minimum(a[:, 1], b[:, 1]) - reach), 0, h - 1).astype(np.int64)
    y_hi = np.clip(np.ceil(np.maximum(a[:, 1], b[:, 1]) + reach), 0, h - 1).astype(np.int64)
    bw = np.maximum(0, x_hi - x_lo + 1)
    bh = np.maximum(0, y_hi - y_lo + 1)
    counts = bw * bh
    keep = counts > 0
    if not keep.any():
        return mask, None
    seg_ids = np.flatnonzero(keep)
    x_lo, y_lo, bw, bh, counts = (arr[keep] for arr in (x_lo, y_lo, bw, bh, counts))

    total = int(counts.sum())
    row = np.repeat(np.arange(seg_ids.size), counts)
    local = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    px = x_lo[row] + local % bw[row]
    py = y_lo[row] + local // bw[row]
    seg = seg_ids[row]

    pa = a[seg]
    pb = b[seg]
    c = np.stack([px + 0.5, py + 0.5], axis=1)
    ab = pb - pa
    denom = (ab * ab).sum(axis=1)
    denom[denom == 0] = 1.0
    tseg = np.clip(((c - pa) * ab).sum(axis=1) / denom, 0.0, 1.0)
    closest = pa + tseg[:, None] * ab
    dist = np.linalg.norm(c - closest, axis=1)

    pix = py * w + px
    order = np.lexsort((seg, dist, pix))
    pix_sorted = pix[order]
    first = np.unique(pix_sorted, return_index=True)[1]
    win = order[first]
    win = win[dist[win] <= band]

    wpix = pix[win]
    signs = np.where(hard.reshape(-1)[wpix] > 0, 1.0, -1.0)
    sd = signs * dist[win]
    mask.reshape(-1)[wpix] = np.clip(0.5 + sd / band, 0.0, 1.0)
    assignment = {
        "pix": wpix, "seg": seg[win], "t": tseg[win],
        "residual": c[win] - closest[win], "dist": dist[win], "sign": signs,
    }
    return mask, assignment


def _screen_grad_to_vertices(gscreen: np.ndarray, vert_ids: np.ndarray,
                             pc: np.ndarray, camera: Camera, nv: int) -> np.ndarray:
    """Chain [M,2] screen-space gradients into [Nv,3] world-space gradients."""
    zc = np.maximum(pc[vert_ids, 2], _Z_NEAR)
    xc = pc[vert_ids, 0]
    yc = pc[vert_ids, 1]
    gu = gscreen[:, 0]
    gv = gscreen[:, 1]
    gc = np.stack([
        gu * camera.fx / zc,
        gv * camera.fy / zc,
        -gu * camera.fx * xc / zc ** 2 - gv * camera.fy * yc / zc ** 2,
    ], axis=1)
    gw = gc @ camera.rotation  # R^T applied row-wise
    out = np.zeros((nv, 3))
    np.add.at(out, vert_ids, gw)
    return out


def rasterize(mesh: Mesh, camera: Camera, resolution: int, band: float = 2.0) -> GBuffer:
    """Z-buffered rasterization with gradients to mesh vertex positions."""
    cam = scale_camera(camera, resolution)
    h = w = resolution
    if mesh.is_empty():
        return _background(h, w)

    verts = mesh.vertices.data
    tris = mesh.triangles
    nv = verts.shape[0]
    winners, ctx = _raster_core(verts, tris, cam, h, w)

    depth_map = np.full((h, w), DEPTH_SENTINEL)
    normal_map = np.zeros((3, h, w))
    faceid = np.full((h, w), FACE_SENTINEL, dtype=np.int64)
    bary = np.zeros((3, h, w))
    hard = np.zeros((h, w))

    cam_pos = cam.position
    normals, flips, u_raw, u_norm, e1, e2 = _face_normals(verts, tris, cam_pos)

    if winners is not None:
        pix = winners["pix"]
        tri = winners["tri"]
        depth_map.reshape(-1)[pix] = winners["depth"]
        faceid.reshape(-1)[pix] = tri
        hard.reshape(-1)[pix] = 1.0
        nmap = normal_map.reshape(3, -1)
        nmap[:, pix] = (normals[tri] * flips[tri, None]).T
        bmap = bary.reshape(3, -1)
        bmap[:, pix] = winners["pers"].T

    sil = _silhouette_edges(verts, tris, ctx["screen"], ctx["z"])
    mask_data, assignment = _soft_mask_data(hard, sil, ctx["screen"], band, h, w)

    depth = dc.Array(depth_map)
    normal = dc.Array(normal_map)
    mask = dc.Array(mask_data)

    def bwd(g_depth, g_normal, g_mask):
        gv = np.zeros((nv, 3))
        if winners is not None:
            gv += _depth_backward(g_depth, winners, tris, ctx, cam, nv)
            gv += _normal_backward(g_normal, winners, tris, normals, flips,
                                   u_raw, u_norm, e1, e2, nv)
        if assignment is not None:
            gv += _mask_backward(g_mask, assignment, sil, ctx, cam, band, nv)
        mesh.vertices.accumulate_grad(gv.astype(mesh.vertices.data.dtype))

    dc.record((mesh.vertices,), (depth, normal, mask), bwd)
    return GBuffer(depth=depth, normal=normal, mask=mask, faceid=faceid,
                   bary=bary, hard_mask=hard)


def _depth_backward(g_depth, winners, tris, ctx, cam, nv):
    pix = winners["pix"]
    gd = g_depth.reshape(-1)[pix]
    live = gd != 0.0
    if not live.any():
        return np.zeros((nv, 3))
    gd = gd[live]
    tri = winners["tri"][live]
    lam = winners["lam"][live]
    depth = winners["depth"][live]
    zinv = winners["zinv"][live]
    area2 = winners["area2"][tri]
    zv = ctx["z"][tris[tri]]
    screen = ctx["screen"]
    sx = screen[tris[tri], 0]
    sy = screen[tris[tri], 1]
    pixx = (winners["pix"][live] % g_depth.shape[1]) + 0.5
    pixy = (winners["pix"][live] // g_depth.shape[1]) + 0.5

    gz_fac = -gd * depth ** 2
    gscreen = np.zeros((gd.size, 3, 2))
    for j in range(3):
        gwj = gz_fac * (1.0 / zv[:, j] - zinv) / area2
        a = (j + 1) % 3
        b = (j + 2) % 3
        # dw_j/dp_a = (y_b - cy, cx - x_b); dw_j/dp_b = (cy - y_a, x_a - cx).
        gscreen[:, a, 0] += gwj * (sy[:, b] - pixy)
        gscreen[:, a, 1] += gwj * (pixx - sx[:, b])
        gscreen[:, b, 0] += gwj * (pixy - sy[:, a])
        gscreen[:, b, 1] += gwj * (sx[:, a] - pixx)
    vert_ids = tris[tri].reshape(-1)
    gv = _screen_grad_to_vertices(gscreen.reshape(-1, 2), vert_ids, ctx["pc"], cam, nv)

    # Direct dependence of zinv on camera-space z of each corner.
    gzc = gz_fac[:, None] * (-lam / zv ** 2)  # [M,3]
    gw_z = gzc.reshape(-1)[:, None] * cam.rotation[2][None, :]
    np.add.at(gv, vert_ids, gw_z)
    return gv


def _normal_backward(g_normal, winners, tris, normals, flips, u_raw, u_norm,
                     e1, e2, nv):
    gn_flat = g_normal.reshape(3, -1)[:, winners["pix"]].T  # [M,3]
    if not gn_flat.any():
        return np.zeros((nv, 3))
    tri = winners["tri"]
    nt = tris.shape[0]
    gface = np.zeros((nt, 3))
    for c in range(3):
        gface[:, c] = np.bincount(tri, weights=gn_flat[:, c], minlength=nt)
    live = np.flatnonzero(np.abs(gface).sum(axis=1) > 0)
    if live.size == 0:
        return np.zeros((nv, 3))
    gf = gface[live] * flips[live, None]
    n = normals[live]
    gu = (gf - (gf * n).sum(axis=1, keepdims=True) * n) / u_norm[live, None]
    ge1 = np.cross(e2[live], gu)
    ge2 = np.cross(gu, e1[live])
    gv = np.zeros((nv, 3))
    np.add.at(gv, tris[live, 0], -ge1 - ge2)
    np.add.at(gv, tris[live, 1], ge1)
    np.add.at(gv, tris[live, 2], ge2)
    return gv


def _mask_backward(g_mask, assignment, sil, ctx, cam, band, nv):
    gm = g_mask.reshape(-1)[assignment["pix"]]
    live = gm != 0.0
    if not live.any():
        return np.zeros((nv, 3))
    gm = gm[live]
    seg = assignment["seg"][live]
    t = assignment["t"][live]
    res = assignment["residual"][live]
    dist = np.maximum(assignment["dist"][live], 1e-12)
    sign = assignment["sign"][live]
    # m = clip(0.5 + sign * dist / band); saturated pixels already have
    # dist <= band by construction, so the ramp is active here.
    gdist = gm * sign / band
    rhat = res / dist[:, None]
    ga = -rhat * (1.0 - t)[:, None] * gdist[:, None]
    gb = -rhat * t[:, None] * gdist[:, None]
    vert_ids = np.concatenate([sil[seg, 0], sil[seg, 1]])
    gsc = np.concatenate([ga, gb], axis=0)
    return _screen_grad_to_vertices(gsc, vert_ids, ctx["pc"], cam, nv)


def soft_mask(mesh: Mesh, camera: Camera, resolution: int, band: float = 2.0) -> dc.Array:
    """Standalone differentiable silhouette-band mask."""
    if band < 1.0:
        raise ValueError("band must be at least one pixel")
    return rasterize(mesh, camera, resolution, band=band).mask


def render_gt(shape: ShapeSDF, camera: Camera, resolution: int,
              eps: float = 1e-6, max_steps: int = 256, step_scale: float = 0.8,
              with_aux: bool = False):
    """Sphere-traced ground-truth GBuffer of an analytic SDF (not differentiable).

    Normals come from central differences of the SDF (h = 1e-4), expressed
    in world space.
    """
    cam = scale_camera(camera, resolution)
    h = w = resolution
    xx, yy = np.meshgrid(np.arange(w) + 0.5, np.arange(h) + 0.5)
    dirs_c = np.stack([(xx - cam.cx) / cam.fx, (yy - cam.cy) / cam.fy,
                       np.ones_like(xx)], axis=-1).reshape(-1, 3)
    dirs = dirs_c @ cam.rotation  # R^T rows
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origin = cam.position

    # Restrict to rays hitting the (slightly padded) unit bounding sphere.
    b = dirs @ origin
    disc = b * b - (origin @ origin - 1.1 ** 2)
    may_hit = disc > 0
    t_enter = np.where(may_hit, -b - np.sqrt(np.maximum(disc, 0.0)), 0.0)
    t_exit = np.where(may_hit, -b + np.sqrt(np.maximum(disc, 0.0)), 0.0)

    n_rays = dirs.shape[0]
    t = np.maximum(t_enter, 0.0)
    alive = may_hit.copy()
    hit = np.zeros(n_rays, dtype=bool)
    for _ in range(max_steps):
        if not alive.any():
            break
        idx = np.flatnonzero(alive)
        pts = origin + t[idx, None] * dirs[idx]
        d = shape.eval(pts)
        converged = d < eps
        hit[idx[converged]] = True
        alive[idx[converged]] = False
        t[idx] += step_scale * np.maximum(d, 0.0)
        overshoot = t[idx] > t_exit[idx]
        alive[idx[overshoot]] = False

    depth_map = np.full(n_rays, DEPTH_SENTINEL)
    normal_map = np.zeros((n_rays, 3))
    mask = np.zeros(n_rays)
    points = np.zeros((n_rays, 3))
    part = np.full(n_rays, -1, dtype=np.int64)
    if hit.any():
        hid = np.flatnonzero(hit)
        pts = origin + t[hid, None] * dirs[hid]
        points[hid] = pts
        cam_z = pts @ cam.rotation[2] + cam.translation[2]
        depth_map[hid] = cam_z
        g = shape.gradient(pts, h=1e-4)
        g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-12)
        normal_map[hid] = g
        mask[hid] = 1.0
        _, pid = shape.eval_with_part(pts)
        part[hid] = pid

    buf = GBuffer(depth=dc.Array(depth_map.reshape(h, w)),
                  normal=dc.Array(normal_map.T.reshape(3, h, w)),
                  mask=dc.Array(mask.reshape(h, w)),
                  faceid=np.where(mask.reshape(h, w) > 0, 0, FACE_SENTINEL).astype(np.int64),
                  bary=np.zeros((3, h, w)),
                  hard_mask=mask.reshape(h, w))
    if with_aux:
        return buf, {"points": points.reshape(h, w, 3), "part": part.reshape(h, w)}
    return buf


def write_pgm(path, image: np.ndarray) -> None:
    """Plain-text PGM dump of a single-channel map (for debugging)."""
    img = np.asarray(image, dtype=np.float64)
    finite = np.isfinite(img)
    lo = img[finite].min() if finite.any() else 0.0
    hi = img[finite].max() if finite.any() else 1.0
    span = hi - lo if hi > lo else 1.0
    q = np.where(finite, ((img - lo) / span * 255), 0).astype(np.int64)
    with open(path, "w") as f:
        f.write(f"P2\n{img.shape[1]} {img.shape[0]}\n255\n")
        for row in q:
            f.write(" ".join(str(v) for v in row) + "\n")


def write_ppm(path, image: np.ndarray) -> None:
    """Plain-text PPM dump of a [3,H,W] map scaled from [-1,1] or [0,1]."""
    img = np.asarray(image, dtype=np.float64)
    if img.min() < 0:
        img = (img + 1.0) / 2.0
    q = np.clip(img * 255, 0, 255).astype(np.int64)
    with open(path, "w") as f:
        f.write(f"P3\n{img.shape[2]} {img.shape[1]}\n255\n")
        for y in range(img.shape[1]):
            f.write(" ".join(f"{q[0, y, x]} {q[1, y, x]} {q[2, y, x]}"
                             for x in range(img.shape[2])) + "\n")
