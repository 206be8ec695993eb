"""Iterative volume adjustment: render, compare, back-project.

Each iteration renders the current volume for every view, forms per-pixel
residuals against the source frames inside the bounding box, and adds to
every key point around each in-hull sample of every flame ray an amount
proportional to the residual, attenuated by the blend transparency of the
sample and by exp(-alpha_d * distance) to the key point. A per-sample
Gaussian weight (mean 1, clamped to [0, 2]) randomizes the deposition
unless deterministic mode is on.

Convergence is declared when the mean over views of the bounding-box pixel
RMSE (on the [0, 255] scale) changes by less than ``converge_eps`` between
successive iterations, or falls below ``converge_eps`` outright.

The RGB channels are reconstructed independently over a shared visual
hull; temperature reconstruction reuses the green channel and inverts the
color-temperature map at the key points.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import EmptyHullError
from .geometry import Camera, pixel_rays
from .imgio import Image
from .preprocess import (
    BBOX_DILATE_PX,
    FLAME_THRESHOLD,
    FlameMask,
    Rect,
    bounding_box,
    threshold_mask,
)
from .radiometry import ColorTempMap, temp_from_green
from .render import RenderConfig, render_pixels
from .volume import OUTSIDE_HULL, HullTags, VoxelGrid, compute_visual_hull

CHANNEL_TAGS = ("red", "green", "blue")


@dataclass
class ReconstructionConfig:
    alpha_l: float = 0.001
    alpha_d: float = 1.0
    tau: float = 0.05
    max_iters: int = 200
    converge_eps: float = 0.01
    rng_seed: int = 0
    g_sigma: float = 0.1
    deterministic_mode: bool = False
    reference_edge: float = 0.2  # box extent at which alpha_d applies unscaled
    n_chunks: int = 16  # fixed parallel split of the adjustment pass

    def __post_init__(self):
        if self.alpha_l <= 0 or self.alpha_d <= 0:
            raise ValueError("alpha_l and alpha_d must be positive")
        if not (0.0 < self.tau < 1.0):
            raise ValueError("tau must be in (0, 1)")
        if self.converge_eps <= 0:
            raise ValueError("converge_eps must be positive")
        if self.g_sigma < 0:
            raise ValueError("g_sigma must be non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.n_chunks < 1:
            raise ValueError("n_chunks must be >= 1")

    def effective_alpha_d(self, grid: VoxelGrid) -> float:
        """alpha_d rescaled inversely with the volume's largest extent."""
        extent = float(np.max(grid.box.size))
        return self.alpha_d * (self.reference_edge / extent)


@dataclass
class IterationTrace:
    """Per-iteration error and timing of one channel reconstruction."""

    rmse: list[float] = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list)
    vol_rmse: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.rmse)


def residual_image(src: Image, rec: Image, bbox: Rect) -> np.ndarray:
    """Signed per-pixel difference src - rec inside bbox, zero outside."""
    if (src.width, src.height, src.channels) != (rec.width, rec.height, rec.channels):
        raise ValueError("images must share size and channel count")
    if not (0 <= bbox.u0 and bbox.u1 < src.width and 0 <= bbox.v0 and bbox.v1 < src.height):
        raise ValueError(f"bbox {bbox} outside {src.width}x{src.height} image")
    out = np.zeros((src.height, src.width, src.channels))
    sl = bbox.slices
    out[sl] = src.data[sl].astype(np.float64) - rec.data[sl].astype(np.float64)
    return out


def adjustment_value(delta_l: float, k: int, dist: float, cfg: ReconstructionConfig) -> float:
    """Key-point increment for one sample: residual scaled by the sample's
    blend transparency and by exponential decay in key-sample distance.

    ``dist`` is in meters and is weighted by the unscaled alpha_d; callers
    working on a grid apply ``cfg.effective_alpha_d`` themselves.
    """
    if k < 1:
        raise ValueError("sample order k must be >= 1")
    if dist < 0:
        raise ValueError("distance must be non-negative")
    trans = 1.0
    for _ in range(k - 1):
        trans *= 1.0 - cfg.tau
    return cfg.alpha_l * delta_l * trans * np.exp(-cfg.alpha_d * dist)


def rmse_pixels(a: Image, b: Image, bbox: Rect) -> np.ndarray:
    """Per-channel RMSE over the bounding box, [0, 255] scale."""
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels):
        raise ValueError("images must share size and channel count")
    if bbox.area <= 0:
        raise ValueError("empty bounding box")
    sl = bbox.slices
    d = a.data[sl].astype(np.float64) - b.data[sl].astype(np.float64)
    return np.sqrt(np.mean(d * d, axis=(0, 1)))


def rmse_volume(a: VoxelGrid, b: VoxelGrid, hull: HullTags) -> float:
    """RMSE over key points adjacent to at least one inside-hull voxel."""
    if not a.same_geometry(b):
        raise ValueError("grids must share geometry")
    mask = hull.key_point_mask()
    if not mask.any():
        raise EmptyHullError("hull has no inside voxels")
    d = a.values.astype(np.float64)[mask] - b.values.astype(np.float64)[mask]
    return float(np.sqrt(np.mean(d * d)))


def _flame_ray_pixels(mask: FlameMask, bbox: Rect) -> tuple[np.ndarray, np.ndarray]:
    """Row/col indices of flame pixels inside the bounding box, row-major."""
    window = np.zeros_like(mask.bits)
    window[bbox.slices] = True
    rows, cols = np.nonzero(mask.bits & window)
    return rows, cols


def adjust_pass(
    grid: VoxelGrid,
    hull: HullTags,
    cameras: list[Camera],
    residuals: list[np.ndarray],
    masks: list[FlameMask],
    cfg: ReconstructionConfig,
    rng: np.random.Generator,
    bbox: Rect | None = None,
) -> VoxelGrid:
    """One adjustment sweep over all views' flame rays; mutates ``grid``.

    Residual fields are one 2D array per view (zero outside the bounding
    box). Only rays from flame pixels inside ``bbox`` back-project, only
    samples inside the hull deposit, and key points outside the hull are
    never written. The Gaussian weights are drawn in a fixed view-major,
    row-major, front-to-back order, so a given seed reproduces the pass
    exactly regardless of thread count.
    """
    if not (len(cameras) == len(residuals) == len(masks)):
        raise ValueError("cameras, residuals, masks must have equal length")
    inside_vox = np.ascontiguousarray(hull.inside_voxels(), dtype=np.uint8)
    if bbox is None:
        bbox = Rect(0, 0, cameras[0].width - 1, cameras[0].height - 1)
    alpha_d_eff = cfg.effective_alpha_d(grid)
    lat_shape = grid.values.shape
    partials = np.zeros((cfg.n_chunks,) + lat_shape)
    deterministic = cfg.deterministic_mode or cfg.g_sigma == 0.0

    for cam, res, mask in zip(cameras, residuals, masks):
        res = np.asarray(res, dtype=np.float64)
        if res.shape != (cam.height, cam.width):
            raise ValueError("residual field size does not match camera")
        rows, cols = _flame_ray_pixels(mask, bbox)
        if rows.size == 0:
            continue
        origin, dirs = pixel_rays(cam, cols + 0.5, rows + 0.5)
        dirs = np.ascontiguousarray(dirs)
        offsets = np.zeros(rows.size, dtype=np.int64)
        if deterministic:
            g_values = np.ones(1)
            use_g = False
        else:
            counts = np.empty(rows.size, dtype=np.int64)
            _kernels.count_hull_samples(
                origin, dirs, inside_vox, grid.origin, grid.edge, counts
            )
            np.cumsum(counts[:-1], out=offsets[1:])
            total = int(offsets[-1] + counts[-1])
            g_values = np.clip(rng.normal(1.0, cfg.g_sigma, size=total), 0.0, 2.0)
            if total == 0:
                g_values = np.ones(1)
            use_g = True
        _kernels.adjust_rays_chunked(
            origin,
            dirs,
            res[rows, cols],
            g_values,
            offsets,
            use_g,
            inside_vox,
            grid.origin,
            grid.edge,
            cfg.tau,
            cfg.alpha_l,
            alpha_d_eff,
            partials,
        )

    delta = np.zeros(lat_shape)
    for c in range(cfg.n_chunks):  # fixed merge order
        delta += partials[c]
    new_vals = grid.values.astype(np.float64) + delta
    np.maximum(new_vals, OUTSIDE_HULL, out=new_vals)
    grid.values = new_vals.astype(np.float32)
    return grid


def _init_grid(grid_geom: VoxelGrid, hull: HullTags, tag: str) -> VoxelGrid:
    """Zeros at key points touching the hull, the sentinel everywhere else."""
    kp = hull.key_point_mask()
    if not kp.any():
        raise EmptyHullError("visual hull is empty")
    vals = np.where(kp, np.float32(0.0), np.float32(OUTSIDE_HULL))
    return VoxelGrid(
        grid_geom.nx, grid_geom.ny, grid_geom.nz, grid_geom.origin.copy(), grid_geom.edge,
        tag, vals,
    )


def _bbox_pixel_grid(bbox: Rect) -> tuple[np.ndarray, np.ndarray]:
    """Pixel-center coordinates of every bounding-box pixel, row-major."""
    us = np.arange(bbox.u0, bbox.u1 + 1, dtype=np.float64) + 0.5
    vs = np.arange(bbox.v0, bbox.v1 + 1, dtype=np.float64) + 0.5
    uu, vv = np.meshgrid(us, vs, indexing="xy")
    return uu.ravel(), vv.ravel()


def reconstruct_channel(
    images: list[Image],
    cameras: list[Camera],
    grid_geom: VoxelGrid,
    hull: HullTags,
    cfg: ReconstructionConfig,
    *,
    render_cfg: RenderConfig | None = None,
    masks: list[FlameMask] | None = None,
    bbox: Rect | None = None,
    tag: str = "green",
    initial: VoxelGrid | None = None,
    ground_truth: VoxelGrid | None = None,
    callback=None,
) -> tuple[VoxelGrid, IterationTrace]:
    """Reconstruct one scalar channel from single-channel views.

    Iterates render -> residual -> adjust until the convergence rule fires
    or ``max_iters`` is reached. During the loop only bounding-box pixels
    are rendered (per-pixel purity makes this identical to cropping a full
    render). ``callback(iteration, grid, rmse)`` fires after every
    iteration. Returns the grid that produced the last recorded RMSE.
    """
    if len(images) < 2:
        raise ValueError("need at least two views")
    if len(images) != len(cameras):
        raise ValueError("need one camera per image")
    for img, cam in zip(images, cameras):
        if img.channels != 1:
            raise ValueError("reconstruct_channel expects single-channel images")
        if (img.width, img.height) != (cam.width, cam.height):
            raise ValueError("image size does not match camera resolution")
    render_cfg = render_cfg or RenderConfig(tau=cfg.tau)
    if abs(render_cfg.tau - cfg.tau) > 1e-12:
        raise ValueError("render and reconstruction tau must agree")
    if masks is None:
        masks = [
            FlameMask(im.width, im.height, im.data[:, :, 0] > FLAME_THRESHOLD)
            for im in images
        ]
    if bbox is None:
        bbox = bounding_box(masks, BBOX_DILATE_PX)

    if initial is not None and not initial.same_geometry(grid_geom):
        raise ValueError("initial grid geometry does not match grid_geom")
    grid = initial.copy(tag) if initial is not None else _init_grid(grid_geom, hull, tag)
    rng = np.random.default_rng(cfg.rng_seed)
    trace = IterationTrace()
    us, vs = _bbox_pixel_grid(bbox)
    src_blocks = [im.data[bbox.slices][:, :, 0].astype(np.float64) for im in images]
    h_bb = bbox.v1 - bbox.v0 + 1
    w_bb = bbox.u1 - bbox.u0 + 1

    prev_rmse = None
    for it in range(1, cfg.max_iters + 1):
        t0 = time.perf_counter()
        rec_blocks = []
        per_view_rmse = []
        for img, cam, src in zip(images, cameras, src_blocks):
            rec = render_pixels(cam, [grid], render_cfg, us, vs).reshape(h_bb, w_bb)
            rec_blocks.append(rec)
            per_view_rmse.append(float(np.sqrt(np.mean((src - rec) ** 2))))
        rmse = float(np.mean(per_view_rmse))
        trace.rmse.append(rmse)
        if ground_truth is not None:
            trace.vol_rmse.append(rmse_volume(grid, ground_truth, hull))
        trace.wall_ms.append((time.perf_counter() - t0) * 1e3)
        if callback is not None:
            callback(it, grid, rmse)
        if rmse < cfg.converge_eps or (
            prev_rmse is not None and abs(rmse - prev_rmse) < cfg.converge_eps
        ):
            trace.converged = True
            break
        prev_rmse = rmse
        residuals = []
        for src, rec, cam in zip(src_blocks, rec_blocks, cameras):
            field2d = np.zeros((cam.height, cam.width))
            field2d[bbox.slices] = src - rec
            residuals.append(field2d)
        t0 = time.perf_counter()
        adjust_pass(grid, hull, cameras, residuals, masks, cfg, rng, bbox)
        trace.wall_ms[-1] += (time.perf_counter() - t0) * 1e3

    return grid, trace


@dataclass
class ColorResult:
    grids: list[VoxelGrid]
    traces: dict[str, IterationTrace]
    hull: HullTags
    bbox: Rect
    masks: list[FlameMask]


def reconstruct_color(
    images: list[Image],
    cameras: list[Camera],
    grid_geom: VoxelGrid,
    cfg: ReconstructionConfig,
    *,
    render_cfg: RenderConfig | None = None,
    threshold: float = FLAME_THRESHOLD,
    dilate: int = BBOX_DILATE_PX,
    ground_truth: list[VoxelGrid] | None = None,
    callback=None,
) -> ColorResult:
    """Reconstruct R, G, B independently over one shared visual hull.

    Each channel starts a fresh generator from the same seed, so grayscale
    inputs produce three identical grids.
    """
    masked = [threshold_mask(im, threshold) for im in images]
    masks = [m for m, _ in masked]
    blanked = [im for _, im in masked]
    bbox = bounding_box(masks, dilate)
    hull = compute_visual_hull(grid_geom, [m.bits for m in masks], cameras)
    grids: list[VoxelGrid] = []
    traces: dict[str, IterationTrace] = {}
    for c, tag in enumerate(CHANNEL_TAGS):
        grid, trace = reconstruct_channel(
            [im.channel(c) for im in blanked],
            cameras,
            grid_geom,
            hull,
            cfg,
            render_cfg=render_cfg,
            masks=masks,
            bbox=bbox,
            tag=tag,
            ground_truth=None if ground_truth is None else ground_truth[c],
            callback=None if callback is None else (lambda it, g, r, _t=tag: callback(_t, it, g, r)),
        )
        grids.append(grid)
        traces[tag] = trace
    return ColorResult(grids, traces, hull, bbox, masks)


def rgb_grids_from_temperature(
    tgrid: VoxelGrid, cmap: ColorTempMap, hull: HullTags
) -> list[VoxelGrid]:
    """Map a temperature lattice through the color table, channel by channel."""
    kp = hull.key_point_mask()
    rgb = cmap.rgb_of(np.clip(tgrid.values, cmap.t_min, cmap.t_max))
    out = []
    for c, tag in enumerate(CHANNEL_TAGS):
        vals = np.where(kp, rgb[..., c].astype(np.float32), np.float32(OUTSIDE_HULL))
        out.append(
            VoxelGrid(tgrid.nx, tgrid.ny, tgrid.nz, tgrid.origin.copy(), tgrid.edge, tag, vals)
        )
    return out


@dataclass
class TemperatureResult:
    temp_grid: VoxelGrid
    green_grid: VoxelGrid
    trace: IterationTrace
    hull: HullTags
    bbox: Rect
    n_clamped_low: int
    n_clamped_high: int


def reconstruct_temperature(
    images: list[Image],
    cameras: list[Camera],
    cmap: ColorTempMap,
    grid_geom: VoxelGrid,
    cfg: ReconstructionConfig,
    *,
    render_cfg: RenderConfig | None = None,
    threshold: float = FLAME_THRESHOLD,
    dilate: int = BBOX_DILATE_PX,
    snapshot_callback=None,
) -> TemperatureResult:
    """Temperature reconstruction: the green channel is reconstructed and the
    color-temperature map inverted at every in-hull key point.

    Green values outside the map's green range clamp to the nearest
    endpoint and are counted. Key points outside the hull keep the
    sentinel: they are "no medium", not a temperature. When
    ``snapshot_callback(iteration, temp_grid, rgb_grids)`` is given, each
    iteration's green lattice is converted on the fly so callers can render
    color snapshots of the evolving temperature field.
    """
    masked = [threshold_mask(im, threshold) for im in images]
    masks = [m for m, _ in masked]
    blanked = [im for _, im in masked]
    bbox = bounding_box(masks, dilate)
    hull = compute_visual_hull(grid_geom, [m.bits for m in masks], cameras)
    kp = hull.key_point_mask()

    def green_to_temp(green_grid: VoxelGrid) -> tuple[VoxelGrid, int, int]:
        greens = green_grid.values[kp].astype(np.float64)
        temps, _ = temp_from_green(cmap, greens)
        n_low = int(np.sum(greens < cmap.green[0]))
        n_high = int(np.sum(greens > cmap.green[-1]))
        vals = np.full(green_grid.values.shape, OUTSIDE_HULL, dtype=np.float32)
        vals[kp] = temps.astype(np.float32)
        tg = VoxelGrid(
            green_grid.nx, green_grid.ny, green_grid.nz, green_grid.origin.copy(),
            green_grid.edge, "temperature", vals,
        )
        return tg, n_low, n_high

    callback = None
    if snapshot_callback is not None:

        def callback(it, grid, rmse):
            tg, _, _ = green_to_temp(grid)
            snapshot_callback(it, tg, rgb_grids_from_temperature(tg, cmap, hull))

    green_grid, trace = reconstruct_channel(
        [im.channel(1) for im in blanked],
        cameras,
        grid_geom,
        hull,
        cfg,
        render_cfg=render_cfg,
        masks=masks,
        bbox=bbox,
        tag="green",
        callback=callback,
    )
    temp_grid, n_low, n_high = green_to_temp(green_grid)
    return TemperatureResult(temp_grid, green_grid, trace, hull, bbox, n_low, n_high)


def write_trace_csv(path, traces: dict[str, IterationTrace]) -> None:
    """CSV export ``iter,rmse_r,rmse_g,rmse_b,wall_ms[,vol_rmse]``.

    Channels that converged early repeat their final RMSE on later rows
    (their wall time contributes zero). Missing channels leave blanks.
    """
    have_vol = any(t.vol_rmse for t in traces.values())
    n = max(t.iterations for t in traces.values())

    def cell(trace: IterationTrace | None, series: str, i: int) -> str:
        if trace is None:
            return ""
        xs = getattr(trace, series)
        if not xs:
            return ""
        if i < len(xs):
            return repr(xs[i])
        return repr(xs[-1]) if series in ("rmse", "vol_rmse") else "0.0"

    lines = ["iter,rmse_r,rmse_g,rmse_b,wall_ms" + (",vol_rmse" if have_vol else "")]
    for i in range(n):
        wall = sum(
            t.wall_ms[i] if i < len(t.wall_ms) else 0.0 for t in traces.values()
        )
        row = [str(i + 1)]
        for tag in CHANNEL_TAGS:
            row.append(cell(traces.get(tag), "rmse", i))
        row.append(repr(wall))
        if have_vol:
            vols = [
                float(cell(t, "vol_rmse", i)) for t in traces.values() if t.vol_rmse
            ]
            row.append(repr(float(np.mean(vols))) if vols else "")
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
