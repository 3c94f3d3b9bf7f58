"""Orthographic software rasterizer for the six cube-face views.

A normalized model (unit AABB centered at the origin) is projected onto
six rasters, one per axis direction +X, -X, +Y, -Y, +Z, -Z (views 1..6).
Cameras are orthographic with fixed image orientation:

    view  direction  right  up
    1     +X         -Y     +Z
    2     -X         +Y     +Z
    3     +Y         +X     +Z
    4     -Y         -X     +Z
    5     +Z         +X     +Y
    6     -Z         -X     +Y

Hidden surfaces are removed with a z-buffer (nearest to camera wins;
ties go to the lower primitive index).  Point clouds render each point
as a filled disc; meshes rasterize triangles with barycentric vertex
color interpolation.  No lighting, shading, or anti-aliasing is applied:
the rendered attribute is the stored vertex color itself.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ResolutionTooSmall
from .model_io import Model3D, ModelKind

# (direction, right, up) per view, k = 1..6
VIEW_FRAMES: tuple[tuple[np.ndarray, np.ndarray, np.ndarray], ...] = tuple(
    (np.array(d, float), np.array(r, float), np.array(u, float))
    for d, r, u in [
        ((+1, 0, 0), (0, -1, 0), (0, 0, +1)),
        ((-1, 0, 0), (0, +1, 0), (0, 0, +1)),
        ((0, +1, 0), (+1, 0, 0), (0, 0, +1)),
        ((0, -1, 0), (-1, 0, 0), (0, 0, +1)),
        ((0, 0, +1), (+1, 0, 0), (0, +1, 0)),
        ((0, 0, -1), (-1, 0, 0), (0, +1, 0)),
    ]
)

NUM_VIEWS = 6


@dataclass(frozen=True)
class RenderConfig:
    """Rasterization parameters shared by all six views."""

    resolution: int = 1024
    splat_radius: float = 1.0
    background: tuple[int, int, int] = (255, 255, 255)

    def __post_init__(self) -> None:
        if self.resolution < 1:
            raise ResolutionTooSmall(f"resolution {self.resolution} < 1")
        if self.splat_radius < 0.5:
            raise ValueError("splat_radius must be >= 0.5 px")
        if len(self.background) != 3 or not all(
            0 <= c <= 255 for c in self.background
        ):
            raise ValueError("background must be an RGB triple in [0, 255]")


@dataclass(frozen=True)
class ProjectionSet:
    """Six rendered views with foreground masks and per-view render times.

    ``images[k-1]`` is the (R, R, 3) uint8 raster of view ``k``;
    ``masks[k-1]`` is True exactly where a primitive was rasterized.
    Pixels outside the mask carry exactly the background color.
    """

    images: np.ndarray  # (6, R, R, 3) uint8
    masks: np.ndarray   # (6, R, R) bool
    render_times: tuple[float, ...]
    background: tuple[int, int, int]

    def __post_init__(self) -> None:
        self.images.flags.writeable = False
        self.masks.flags.writeable = False

    @property
    def resolution(self) -> int:
        return self.images.shape[1]


def render_projections(
    model: Model3D, cfg: RenderConfig | None = None, parallel: bool = False
) -> ProjectionSet:
    """Rasterize the six perpendicular orthographic views of ``model``.

    The model is expected to be normalized (unit AABB at the origin);
    geometry outside the unit cube is clipped by the raster bounds.
    Deterministic: identical inputs produce bit-identical output.
    """
    cfg = cfg or RenderConfig()

    def one_view(k: int) -> tuple[np.ndarray, np.ndarray, float]:
        t0 = time.perf_counter()
        img, mask = _render_view(model, cfg, k)
        return img, mask, time.perf_counter() - t0

    if parallel:
        with ThreadPoolExecutor(max_workers=NUM_VIEWS) as pool:
            results = list(pool.map(one_view, range(1, NUM_VIEWS + 1)))
    else:
        results = [one_view(k) for k in range(1, NUM_VIEWS + 1)]

    images = np.stack([r[0] for r in results])
    masks = np.stack([r[1] for r in results])
    times = tuple(r[2] for r in results)
    return ProjectionSet(images, masks, times, cfg.background)


def _project(positions: np.ndarray, k: int, res: int):
    """Map world points to continuous (col, row, depth) for view k."""
    d, right, up = VIEW_FRAMES[k - 1]
    u = positions @ right
    v = positions @ up
    depth = 0.5 - positions @ d  # 0 at the near face, 1 at the far face
    col = (u + 0.5) * res
    row = (0.5 - v) * res
    return col, row, depth


def _render_view(model: Model3D, cfg: RenderConfig, k: int):
    res = cfg.resolution
    img = np.empty((res, res, 3), dtype=np.uint8)
    img[:] = np.asarray(cfg.background, dtype=np.uint8)
    mask = np.zeros((res, res), dtype=bool)
    if model.kind is ModelKind.POINT_CLOUD:
        _raster_points(model, cfg, k, img, mask)
    else:
        _raster_mesh(model, cfg, k, img, mask)
    return img, mask


def _raster_points(
    model: Model3D, cfg: RenderConfig, k: int, img: np.ndarray, mask: np.ndarray
) -> None:
    res = cfg.resolution
    radius = cfg.splat_radius
    col_f, row_f, depth = _project(model.positions, k, res)

    # Pixel indices containing each splat center, clamped to the raster.
    base_c = np.clip(np.floor(col_f).astype(np.int64), 0, res - 1)
    base_r = np.clip(np.floor(row_f).astype(np.int64), 0, res - 1)

    m = int(np.floor(radius + 0.5))
    offs = np.arange(-m, m + 1)
    dc, dr = np.meshgrid(offs, offs, indexing="xy")
    dc = dc.ravel()
    dr = dr.ravel()

    cand_c = base_c[:, None] + dc[None, :]
    cand_r = base_r[:, None] + dr[None, :]
    # A pixel is hit when its center lies within the disc; the pixel
    # containing the splat center is always hit so every in-raster point
    # marks at least one pixel even for sub-pixel radii.
    dx = cand_c + 0.5 - col_f[:, None]
    dy = cand_r + 0.5 - row_f[:, None]
    hit = (dx * dx + dy * dy) <= radius * radius
    inside = (col_f >= 0) & (col_f < res) & (row_f >= 0) & (row_f < res)
    hit |= ((dc == 0) & (dr == 0))[None, :] & inside[:, None]
    hit &= (cand_c >= 0) & (cand_c < res) & (cand_r >= 0) & (cand_r < res)

    pt_idx, cand_idx = np.nonzero(hit)
    if pt_idx.size == 0:
        return
    rr = cand_r[pt_idx, cand_idx]
    cc = cand_c[pt_idx, cand_idx]
    dd = depth[pt_idx]
    pid = rr * res + cc
    # Nearest depth wins per pixel; ties go to the lower vertex index.
    order = np.lexsort((pt_idx, dd, pid))
    first = np.unique(pid[order], return_index=True)[1]
    win = order[first]
    img[rr[win], cc[win]] = model.colors[pt_idx[win]]
    mask[rr[win], cc[win]] = True


def _raster_mesh(
    model: Model3D, cfg: RenderConfig, k: int, img: np.ndarray, mask: np.ndarray
) -> None:
    res = cfg.resolution
    col_f, row_f, depth = _project(model.positions, k, res)
    zbuf = np.full((res, res), np.inf)
    colors = model.colors.astype(np.float64)

    for tri in model.faces:
        x0, x1, x2 = col_f[tri]
        y0, y1, y2 = row_f[tri]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0.0:
            continue
        c_lo = max(0, int(np.ceil(min(x0, x1, x2) - 0.5)))
        c_hi = min(res - 1, int(np.floor(max(x0, x1, x2) - 0.5)))
        r_lo = max(0, int(np.ceil(min(y0, y1, y2) - 0.5)))
        r_hi = min(res - 1, int(np.floor(max(y0, y1, y2) - 0.5)))
        if c_lo > c_hi or r_lo > r_hi:
            continue
        xs = np.arange(c_lo, c_hi + 1) + 0.5
        ys = np.arange(r_lo, r_hi + 1) + 0.5
        px, py = np.meshgrid(xs, ys, indexing="xy")
        w0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        w1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
        w2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
        if area > 0:
            inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        else:
            inside = (w0 <= 0) & (w1 <= 0) & (w2 <= 0)
        if not inside.any():
            continue
        l0, l1, l2 = w0 / area, w1 / area, w2 / area
        z = l0 * depth[tri[0]] + l1 * depth[tri[1]] + l2 * depth[tri[2]]
        tile = zbuf[r_lo:r_hi + 1, c_lo:c_hi + 1]
        upd = inside & (z < tile)  # first writer keeps equal depths
        if not upd.any():
            continue
        rgb = (
            l0[..., None] * colors[tri[0]]
            + l1[..., None] * colors[tri[1]]
            + l2[..., None] * colors[tri[2]]
        )
        rgb = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
        tile[upd] = z[upd]
        img[r_lo:r_hi + 1, c_lo:c_hi + 1][upd] = rgb[upd]
        mask[r_lo:r_hi + 1, c_lo:c_hi + 1] |= upd


def dump_projections(ps: ProjectionSet, out_dir: str | Path, stem: str) -> list[Path]:
    """Write the six views and masks as 8-bit PNGs; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for k in range(1, NUM_VIEWS + 1):
        view_path = out_dir / f"{stem}_view{k}.png"
        mask_path = out_dir / f"{stem}_mask{k}.png"
        Image.fromarray(ps.images[k - 1], mode="RGB").save(view_path)
        Image.fromarray(
            (ps.masks[k - 1] * np.uint8(255)), mode="L"
        ).save(mask_path)
        written += [view_path, mask_path]
    return written
