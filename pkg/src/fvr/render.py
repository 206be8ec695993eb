"""Ray-marched image formation: emission, extinction, optional in-scatter.

Marching uses a fixed step equal to the voxel edge, with samples at
``entry + (k - 1/2) * edge``. Per-sample opacity is a constant tau, so the
transparency in front of sample k is (1 - tau)^(k-1) and compositing uses
front-to-back under blending; after the last sample the remaining
transparency multiplies the background.

``integrate_ray`` is the plain-Python reference; ``render_view`` runs the
compiled kernel over all pixels and must agree with it (and with itself for
any thread count, bit-exactly).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import Camera, Ray, pixel_rays
from .imgio import Image
from .radiometry import PhaseConfig, fibonacci_sphere, phase_hg
from .volume import HullTags, SamplePoint, VoxelGrid, sample_trilinear

CHANNEL_INDEX = {"red": 0, "green": 1, "blue": 2}


@dataclass
class RenderConfig:
    tau: float = 0.05
    sigma_a: float = 1.0
    sigma_s: float = 0.0
    scattering_enabled: bool = False
    scatter_dirs: int = 32
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))
    step_mode: str = "voxel_edge"

    def __post_init__(self):
        if not (0.0 < self.tau < 1.0):
            raise ValueError("tau must be in (0, 1)")
        if self.sigma_a < 0 or self.sigma_s < 0:
            raise ValueError("sigma_a and sigma_s must be non-negative")
        if self.scattering_enabled and self.scatter_dirs < 1:
            raise ValueError("scatter_dirs must be >= 1 when scattering is enabled")
        if self.step_mode != "voxel_edge":
            raise ValueError("only step_mode='voxel_edge' is supported")
        self.background = np.asarray(self.background, dtype=np.float64).reshape(3)


def _march_span(ray: Ray, grid: VoxelGrid):
    """Slab intersection mirroring the kernel arithmetic exactly."""
    box = grid.box
    lo, hi = box.origin, box.max_corner
    tmin, tmax = -1.0e300, 1.0e300
    for axis in range(3):
        o, d = ray.origin[axis], ray.direction[axis]
        if d == 0.0:
            if o < lo[axis] or o > hi[axis]:
                return None
        else:
            t0 = (lo[axis] - o) / d
            t1 = (hi[axis] - o) / d
            if t0 > t1:
                t0, t1 = t1, t0
            if t0 > tmin:
                tmin = t0
            if t1 < tmax:
                tmax = t1
    t_entry = tmin if tmin > 0.0 else 0.0
    if tmax <= t_entry:
        return None
    return t_entry, tmax


def march(ray: Ray, grid: VoxelGrid) -> list[SamplePoint]:
    """Sample points along the ray, front to back; empty when the ray misses."""
    span = _march_span(ray, grid)
    if span is None:
        return []
    t_entry, t_exit = span
    n = int(np.floor((t_exit - t_entry) / grid.edge + _kernels.MARCH_COUNT_EPS))
    return [
        SamplePoint(ray.at(t_entry + (k - 0.5) * grid.edge), k) for k in range(1, n + 1)
    ]


def sample_transparency(k: int, tau: float) -> float:
    """Transparency in front of the k-th sample: (1 - tau)^(k-1).

    Computed by repeated multiplication so it matches the renderer's
    sequential accumulation bit for bit.
    """
    if k < 1:
        raise ValueError("sample order k must be >= 1")
    t = 1.0
    for _ in range(k - 1):
        t *= 1.0 - tau
    return t


def in_scatter(
    grids: list[VoxelGrid],
    p,
    cfg: RenderConfig,
    phase: PhaseConfig,
    out_dir=(0.0, 0.0, 1.0),
) -> np.ndarray:
    """Single-scattering gather: the emission field sampled a half gather
    distance along each of a fixed direction set, phase-weighted and
    integrated over the sphere.

    For a uniform field and g = 0 this returns the field value itself. The
    gather distance is one voxel edge; ``out_dir`` is the propagation
    direction the phase function is evaluated against.
    """
    nch = len(grids)
    if not cfg.scattering_enabled or cfg.sigma_s == 0.0:
        return np.zeros(nch)
    p = np.asarray(p, dtype=np.float64)
    out_dir = np.asarray(out_dir, dtype=np.float64)
    dirs = fibonacci_sphere(cfg.scatter_dirs)
    gather = grids[0].edge
    box = grids[0].box
    lo, hi = box.origin, box.max_corner
    acc = np.zeros(nch)
    for d in dirs:
        q = p + 0.5 * gather * d
        if np.any(q < lo) or np.any(q > hi):
            continue
        ph = phase_hg(phase, float(np.dot(out_dir, d)))
        for c in range(nch):
            acc[c] += ph * sample_trilinear(grids[c], q, clamp_negative=True)
    return acc * 4.0 * np.pi / cfg.scatter_dirs


def _check_shared_geometry(grids: list[VoxelGrid]):
    if not grids:
        raise ValueError("need at least one channel grid")
    for g in grids[1:]:
        if not grids[0].same_geometry(g):
            raise ValueError("channel grids must share geometry")


def _background_for(grids: list[VoxelGrid], cfg: RenderConfig) -> np.ndarray:
    if len(grids) == 3:
        return cfg.background.copy()
    idx = CHANNEL_INDEX.get(grids[0].channel_tag, 0)
    return np.array([cfg.background[idx]])


def integrate_ray(
    ray: Ray,
    grids: list[VoxelGrid],
    hull: HullTags | None,
    cfg: RenderConfig,
    phase: PhaseConfig | None = None,
) -> np.ndarray:
    """Reference per-ray radiance integration (one value per channel).

    ``hull`` is accepted for interface symmetry; outside-hull key points
    already carry the negative sentinel that clamps to zero on read.
    """
    _check_shared_geometry(grids)
    phase = phase or PhaseConfig(0.0)
    background = _background_for(grids, cfg)
    l_dst = np.zeros(len(grids))
    t_dst = 1.0
    for sp in march(ray, grids[0]):
        emission = np.array(
            [sample_trilinear(g, sp.position, clamp_negative=True) for g in grids]
        )
        l_src = cfg.sigma_a * emission
        if cfg.scattering_enabled and cfg.sigma_s > 0.0:
            l_src = l_src + cfg.sigma_s * in_scatter(
                grids, sp.position, cfg, phase, out_dir=ray.direction
            )
        l_dst += t_dst * (cfg.tau * l_src)
        t_dst *= 1.0 - cfg.tau
    return l_dst + t_dst * background


def render_pixels(
    camera: Camera,
    grids: list[VoxelGrid],
    cfg: RenderConfig,
    us: np.ndarray,
    vs: np.ndarray,
    phase: PhaseConfig | None = None,
) -> np.ndarray:
    """Kernel-backed rendering of arbitrary pixel-center coordinates.

    Returns an (N, C) float64 array of intensities.
    """
    _check_shared_geometry(grids)
    phase = phase or PhaseConfig(0.0)
    origin, dirs = pixel_rays(camera, us, vs)
    values = np.stack([g.values for g in grids], axis=0)
    out = np.empty((dirs.shape[0], len(grids)))
    scat = fibonacci_sphere(cfg.scatter_dirs) if cfg.scattering_enabled else np.zeros((1, 3))
    _kernels.render_rays(
        origin,
        np.ascontiguousarray(dirs),
        values,
        grids[0].origin,
        grids[0].edge,
        cfg.tau,
        cfg.sigma_a,
        _background_for(grids, cfg),
        cfg.scattering_enabled,
        cfg.sigma_s,
        scat,
        phase.g,
        grids[0].edge,
        out,
    )
    return out


def render_view(
    camera: Camera,
    grids: list[VoxelGrid],
    hull: HullTags | None,
    cfg: RenderConfig,
    phase: PhaseConfig | None = None,
) -> Image:
    """Render all pixels of the camera; deterministic for fixed inputs."""
    uu, vv = np.meshgrid(
        np.arange(camera.width, dtype=np.float64) + 0.5,
        np.arange(camera.height, dtype=np.float64) + 0.5,
        indexing="xy",
    )
    out = render_pixels(camera, grids, cfg, uu.ravel(), vv.ravel(), phase)
    data = out.reshape(camera.height, camera.width, len(grids)).astype(np.float32)
    return Image(camera.width, camera.height, len(grids), data)
