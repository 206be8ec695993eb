"""Procedural test scenes: plume-like volumes and camera rings.

The flame volume is built from a smooth rising-plume shape field with
seeded noise; a temperature lattice spans the hot part of the lookup range
and the RGB emission is the black-body color of that temperature wherever
the plume has support. Smoke is the same plume as a gray density; the slab
kind is spatially constant for analytic render checks.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .geometry import Camera, look_at
from .radiometry import ColorTempMap, build_color_temp_map
from .volume import VoxelGrid

DEFAULT_BOX_SIDE = 0.2  # meters
# At 0.30 m a 60-degree vertical FOV cannot hold all corners of a 0.2 m box
# in a 4:3 frame once the ring passes near the box diagonals; 0.38 m keeps
# every corner in view with margin even under elevation jitter.
DEFAULT_CAMERA_RADIUS = 0.38
DEFAULT_FOV_DEG = 60.0  # vertical field of view

# fraction of the map range where the plume support starts; keeps the
# interior hot enough that green stays informative for inversion
TEMP_FLOOR_FRAC = 0.55


def _value_noise(shape, rng: np.random.Generator, octaves=3, base_cells=4) -> np.ndarray:
    """Smooth seeded noise in [0, 1] from trilinearly upsampled lattices."""
    out = np.zeros(shape)
    amp_total = 0.0
    for o in range(octaves):
        cells = base_cells * (2**o)
        amp = 0.5**o
        coarse = rng.random((cells + 1,) * 3)
        coords = [np.linspace(0, cells, n) for n in shape]
        grid = np.meshgrid(*coords, indexing="ij")
        out += amp * ndimage.map_coordinates(coarse, np.array(grid), order=1, mode="nearest")
        amp_total += amp
    out /= amp_total
    lo, hi = out.min(), out.max()
    return (out - lo) / (hi - lo) if hi > lo else np.zeros(shape)


def _smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _plume_shape(dims, rng: np.random.Generator, wispy: bool) -> np.ndarray:
    """Shape field in [0, 1] on the key-point lattice; z is up."""
    nx, ny, nz = dims
    shape = (nx + 1, ny + 1, nz + 1)
    x = np.linspace(0.0, 1.0, nx + 1)[:, None, None]
    y = np.linspace(0.0, 1.0, ny + 1)[None, :, None]
    z = np.linspace(0.0, 1.0, nz + 1)[None, None, :]

    sway_phase = rng.uniform(0, 2 * np.pi, size=2)
    sway_amp = rng.uniform(0.03, 0.06, size=2)
    ax = 0.5 + sway_amp[0] * np.sin(2.2 * np.pi * z + sway_phase[0]) * z
    ay = 0.5 + sway_amp[1] * np.sin(1.7 * np.pi * z + sway_phase[1]) * z
    radius = 0.34 * (1.0 - 0.45 * z) + 0.03
    rho2 = (x - ax) ** 2 + (y - ay) ** 2
    core = np.exp(-rho2 / radius**2 * 2.0)
    vert = np.clip(3.6 * np.maximum(z, 0.0) ** 0.35 * (1.0 - z) ** 0.55, 0.0, 1.0)
    noise = _value_noise(shape, rng, octaves=2, base_cells=2)
    raw = core * vert * (0.85 + 0.3 * noise)
    if wispy:
        return np.clip(raw * 1.1, 0.0, 1.0)
    return _smoothstep((raw - 0.12) / (0.42 - 0.12))


FLAME_CHANNEL_GAINS = (1.0, 1.0, 2.8)


def synth_volume(
    dims,
    seed: int,
    kind: str = "flame",
    *,
    origin=None,
    edge: float | None = None,
    cmap: ColorTempMap | None = None,
    slab_value: float = 100.0,
    channel_gains: tuple[float, float, float] = FLAME_CHANNEL_GAINS,
) -> dict[str, VoxelGrid]:
    """Seeded procedural volume of the requested kind.

    Returns channel grids keyed "red"/"green"/"blue"; the flame kind adds
    the ground-truth "temperature" lattice the colors were drawn from.
    Default geometry is a 0.2 m cube centered on the world origin.

    ``channel_gains`` model the camera's per-channel exposure applied on
    top of the black-body color (identical for all views). The default
    boosts the otherwise faint blue channel so it carries usable signal;
    green stays on the color-temperature map's own scale so the same scene
    serves temperature experiments.
    """
    dims = tuple(int(d) for d in np.broadcast_to(np.asarray(dims), (3,)))
    if min(dims) < 8:
        raise ValueError("need at least 8 voxels per axis")
    if kind not in ("flame", "smoke", "slab"):
        raise ValueError(f"unknown kind {kind!r}")
    nx, ny, nz = dims
    if edge is None:
        edge = DEFAULT_BOX_SIDE / max(dims)
    if origin is None:
        origin = -0.5 * edge * np.array([nx, ny, nz])
    origin = np.asarray(origin, dtype=np.float64)

    def grid_of(vals, tag):
        return VoxelGrid(nx, ny, nz, origin.copy(), edge, tag, vals.astype(np.float32))

    rng = np.random.default_rng(seed)
    if kind == "slab":
        const = np.full((nx + 1, ny + 1, nz + 1), slab_value)
        return {tag: grid_of(const, tag) for tag in ("red", "green", "blue")}

    s = _plume_shape(dims, rng, wispy=(kind == "smoke"))
    if kind == "smoke":
        density = 235.0 * s
        return {tag: grid_of(density, tag) for tag in ("red", "green", "blue")}

    cmap = cmap or build_color_temp_map()
    t_lo = cmap.t_min + TEMP_FLOOR_FRAC * (cmap.t_max - cmap.t_min)
    temps = np.where(s > 0.0, t_lo + (cmap.t_max - t_lo) * s, cmap.t_min)
    rgb = cmap.rgb_of(temps)
    support = s > 0.0
    out = {
        tag: grid_of(np.where(support, channel_gains[c] * rgb[..., c], 0.0), tag)
        for c, tag in enumerate(("red", "green", "blue"))
    }
    out["temperature"] = grid_of(temps, "temperature")
    return out


def synth_cameras(
    count: int,
    radius: float = DEFAULT_CAMERA_RADIUS,
    fov: float = DEFAULT_FOV_DEG,
    elevation_jitter_deg: float = 0.0,
    *,
    width: int = 320,
    height: int = 240,
    target=(0.0, 0.0, 0.0),
    seed: int = 0,
) -> list[Camera]:
    """Cameras on a ring around ``target``, aimed at it, azimuth spacing
    360/count degrees, elevations jittered within the given bound.

    ``fov`` is the vertical field of view in degrees.
    """
    if count < 1:
        raise ValueError("need at least one camera")
    if not (0 < fov < 180):
        raise ValueError("fov must be in (0, 180) degrees")
    rng = np.random.default_rng(seed)
    target = np.asarray(target, dtype=np.float64)
    fy = (height / 2.0) / np.tan(np.radians(fov) / 2.0)
    cams = []
    for i in range(count):
        azim = 2.0 * np.pi * i / count
        elev = np.radians(rng.uniform(-elevation_jitter_deg, elevation_jitter_deg))
        pos = target + radius * np.array(
            [np.cos(azim) * np.cos(elev), np.sin(azim) * np.cos(elev), np.sin(elev)]
        )
        R, t = look_at(pos, target)
        cams.append(
            Camera(
                fx=fy, fy=fy, cx=width / 2.0, cy=height / 2.0,
                rotation=R, translation=t, width=width, height=height,
            )
        )
    return cams
