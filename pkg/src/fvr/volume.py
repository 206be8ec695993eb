"""Key-point voxel lattice, trilinear sampling, grid sizing, visual hull.

The reconstructed quantity lives on *key points*, the vertices of the voxel
lattice: a grid of nx * ny * nz voxels stores (nx+1)(ny+1)(nz+1) scalars.
Values are indexed ``values[ix, iy, iz]``; serialized order is x-fastest.

Key points outside the visual hull hold a negative sentinel that rendering
clamps to zero and the reconstruction never touches.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import FormatError, GeometryError
from .geometry import Camera, project_points

OUTSIDE_HULL = -1.0  # sentinel on the [0, 255] intensity scale

MAGIC_VOLUME = b"FVR1"
MAGIC_HULL = b"FVH1"


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned world box given by its minimal corner and edge lengths."""

    origin: np.ndarray
    size: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64).reshape(3)
        s = np.asarray(self.size, dtype=np.float64).reshape(3)
        if np.any(s <= 0):
            raise ValueError(f"box size must be positive, got {s}")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "size", s)
        o.setflags(write=False)
        s.setflags(write=False)

    @property
    def max_corner(self) -> np.ndarray:
        return self.origin + self.size

    def corners(self) -> np.ndarray:
        """The 8 vertices, ordered x-fastest, as an (8, 3) array."""
        o, m = self.origin, self.max_corner
        return np.array(
            [[x, y, z] for z in (o[2], m[2]) for y in (o[1], m[1]) for x in (o[0], m[0])]
        )

    @classmethod
    def cube(cls, center, side: float) -> "Aabb":
        c = np.asarray(center, dtype=np.float64)
        return cls(c - side / 2.0, np.full(3, side))


@dataclass
class VoxelGrid:
    """Scalar field on the key-point lattice of a uniform cubic-voxel grid."""

    nx: int
    ny: int
    nz: int
    origin: np.ndarray
    edge: float
    channel_tag: str = "value"
    values: np.ndarray = None

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 1:
            raise ValueError("voxel counts must be >= 1")
        if self.edge <= 0:
            raise ValueError("voxel edge must be positive")
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        shape = (self.nx + 1, self.ny + 1, self.nz + 1)
        if self.values is None:
            self.values = np.zeros(shape, dtype=np.float32)
        else:
            self.values = np.ascontiguousarray(self.values, dtype=np.float32).reshape(shape)
        if np.any(self.values < OUTSIDE_HULL):
            raise ValueError(f"values below the outside-hull sentinel {OUTSIDE_HULL}")

    @property
    def counts(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def box(self) -> Aabb:
        return Aabb(self.origin, np.array([self.nx, self.ny, self.nz]) * self.edge)

    def key_point_positions(self) -> np.ndarray:
        """World positions of all key points, shape (nx+1, ny+1, nz+1, 3)."""
        xs = self.origin[0] + self.edge * np.arange(self.nx + 1)
        ys = self.origin[1] + self.edge * np.arange(self.ny + 1)
        zs = self.origin[2] + self.edge * np.arange(self.nz + 1)
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        return np.stack([gx, gy, gz], axis=-1)

    def same_geometry(self, other: "VoxelGrid") -> bool:
        return (
            self.counts == other.counts
            and np.allclose(self.origin, other.origin, atol=1e-12)
            and abs(self.edge - other.edge) < 1e-15
        )

    def copy(self, channel_tag: str | None = None) -> "VoxelGrid":
        return VoxelGrid(
            self.nx,
            self.ny,
            self.nz,
            self.origin.copy(),
            self.edge,
            channel_tag or self.channel_tag,
            self.values.copy(),
        )


@dataclass
class HullTags:
    """Per-voxel bitmask of the views that see the voxel as flame."""

    tags: np.ndarray
    n_views: int

    def __post_init__(self):
        if not (1 <= self.n_views <= 32):
            raise ValueError("n_views must be in 1..32")
        self.tags = np.ascontiguousarray(self.tags, dtype=np.uint32)
        full = np.uint32((1 << self.n_views) - 1) if self.n_views < 32 else np.uint32(0xFFFFFFFF)
        if np.any(self.tags & ~full):
            raise ValueError("tags set bits above n_views")

    @property
    def full_mask(self) -> int:
        return (1 << self.n_views) - 1

    def inside_voxels(self) -> np.ndarray:
        """Boolean (nx, ny, nz): voxels seen as flame by every view."""
        return self.tags == np.uint32(self.full_mask)

    def key_point_mask(self, core_erosion: int = 0) -> np.ndarray:
        """Boolean (nx+1, ny+1, nz+1): key points adjacent to >= 1 inside voxel.

        ``core_erosion`` first shrinks the inside-voxel set by that many
        voxels, selecting the hull interior ("core") only.
        """
        inside = self.inside_voxels()
        if core_erosion > 0:
            inside = ndimage.binary_erosion(inside, iterations=core_erosion)
        kp = np.zeros((inside.shape[0] + 1, inside.shape[1] + 1, inside.shape[2] + 1), dtype=bool)
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    kp[
                        dx : dx + inside.shape[0],
                        dy : dy + inside.shape[1],
                        dz : dz + inside.shape[2],
                    ] |= inside
        return kp


@dataclass(frozen=True)
class SamplePoint:
    """A point read along a ray; ``order_k`` is its 1-based front-to-back index."""

    position: np.ndarray
    order_k: int
    value: float | tuple | None = None

    def __post_init__(self):
        if self.order_k < 1:
            raise ValueError("order_k must be >= 1")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))


def determine_dimensions(
    cameras: list[Camera], box: Aabb, alpha: float = 1.5
) -> tuple[int, int, int, float]:
    """Choose voxel counts and the (cubic) voxel edge from projected extents.

    The 8 box vertices are projected into every view; each of the 12 box
    edges occupies some number of pixels along u and along v. For world
    axis d, the largest such extent n_max_d fixes a per-axis edge length
    alpha * l_d / n_max_d; the smallest of the three is kept so voxels are
    cubes, and counts are recomputed from it.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if not cameras:
        raise ValueError("at least one camera required")
    corners = box.corners()
    # vertex index pairs of the 12 edges, grouped by the world axis they span
    edges_by_axis = {
        0: [(0, 1), (2, 3), (4, 5), (6, 7)],
        1: [(0, 2), (1, 3), (4, 6), (5, 7)],
        2: [(0, 4), (1, 5), (2, 6), (3, 7)],
    }
    n_max = np.zeros(3)
    for cam in cameras:
        u, v, _ = project_points(cam, corners)
        for axis, pairs in edges_by_axis.items():
            for a, b in pairs:
                n_max[axis] = max(n_max[axis], abs(u[a] - u[b]), abs(v[a] - v[b]))
    if np.any(n_max <= 0):
        raise GeometryError("box projects to a degenerate extent along some axis")
    per_axis_edge = alpha * box.size / n_max
    edge = float(per_axis_edge.min())
    counts = np.maximum(1, np.rint(box.size / edge).astype(int))
    return int(counts[0]), int(counts[1]), int(counts[2]), edge


def trilinear_weights(grid: VoxelGrid, p) -> tuple[tuple[int, int, int], np.ndarray]:
    """Cell index and the 8 corner weights (x-fastest order) for a point."""
    q = (np.asarray(p, dtype=np.float64) - grid.origin) / grid.edge
    n = np.array([grid.nx, grid.ny, grid.nz])
    if np.any(q < -1e-9) or np.any(q > n + 1e-9):
        raise ValueError(f"point {np.asarray(p)} outside grid box")
    idx = np.minimum(np.floor(q).astype(int), n - 1)
    idx = np.maximum(idx, 0)
    f = q - idx
    wx = np.array([1.0 - f[0], f[0]])
    wy = np.array([1.0 - f[1], f[1]])
    wz = np.array([1.0 - f[2], f[2]])
    w = np.array(
        [wx[dx] * wy[dy] * wz[dz] for dz in (0, 1) for dy in (0, 1) for dx in (0, 1)]
    )
    return (int(idx[0]), int(idx[1]), int(idx[2])), w


def sample_trilinear(grid: VoxelGrid, p, clamp_negative: bool = False) -> float:
    """Trilinear interpolation of the 8 key points around ``p``.

    ``clamp_negative`` replaces negative corner values (the outside-hull
    sentinel) with zero before interpolating, as the renderer does.
    """
    (ix, iy, iz), w = trilinear_weights(grid, p)
    corners = grid.values[ix : ix + 2, iy : iy + 2, iz : iz + 2].astype(np.float64)
    if clamp_negative:
        corners = np.maximum(corners, 0.0)
    # transpose so flattening matches the x-fastest weight order
    return float((corners.transpose(2, 1, 0).ravel() * w).sum())


def _footprint_bounds(u: np.ndarray, v: np.ndarray, counts) -> tuple[np.ndarray, ...]:
    """Per-voxel pixel-space bounding box from key-point projections.

    ``u``/``v`` have lattice shape (nx+1, ny+1, nz+1); output arrays have
    voxel shape (nx, ny, nz) with min/max over each voxel's 8 corners.
    """
    nx, ny, nz = counts
    umin = np.full((nx, ny, nz), np.inf)
    umax = np.full((nx, ny, nz), -np.inf)
    vmin = np.full((nx, ny, nz), np.inf)
    vmax = np.full((nx, ny, nz), -np.inf)
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                sub_u = u[dx : dx + nx, dy : dy + ny, dz : dz + nz]
                sub_v = v[dx : dx + nx, dy : dy + ny, dz : dz + nz]
                np.minimum(umin, sub_u, out=umin)
                np.maximum(umax, sub_u, out=umax)
                np.minimum(vmin, sub_v, out=vmin)
                np.maximum(vmax, sub_v, out=vmax)
    return umin, umax, vmin, vmax


def compute_visual_hull(
    grid_geom: VoxelGrid, masks: list[np.ndarray], cameras: list[Camera]
) -> HullTags:
    """Carve the visual hull: bit i of a voxel's tag is set when the voxel's
    projected footprint in view i overlaps at least one flame pixel.

    The footprint is the pixel-space bounding box of the voxel's 8 projected
    corners (conservative: may only enlarge the hull). A voxel with any
    corner at non-positive camera depth is treated as unseen by that view.
    """
    if len(masks) != len(cameras):
        raise ValueError("need one mask per camera")
    if len(cameras) > 32:
        raise ValueError("at most 32 views supported")
    counts = grid_geom.counts
    tags = np.zeros(counts, dtype=np.uint32)
    kp = grid_geom.key_point_positions().reshape(-1, 3)
    lat_shape = (counts[0] + 1, counts[1] + 1, counts[2] + 1)

    for i, (mask, cam) in enumerate(zip(masks, cameras)):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (cam.height, cam.width):
            raise ValueError(
                f"view {i}: mask shape {mask.shape} != camera {(cam.height, cam.width)}"
            )
        cam_pts = kp @ cam.rotation.T + cam.translation
        z = cam_pts[:, 2]
        ok = z > 0
        zsafe = np.where(ok, z, 1.0)
        u = (cam.fx * cam_pts[:, 0] / zsafe + cam.cx).reshape(lat_shape)
        v = (cam.fy * cam_pts[:, 1] / zsafe + cam.cy).reshape(lat_shape)
        ok = ok.reshape(lat_shape)

        umin, umax, vmin, vmax = _footprint_bounds(u, v, counts)
        vox_ok = np.ones(counts, dtype=bool)
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    vox_ok &= ok[dx : dx + counts[0], dy : dy + counts[1], dz : dz + counts[2]]

        # pixel (a, b) covers [a, a+1) x [b, b+1); overlap with the footprint
        iu0 = np.clip(np.floor(umin).astype(np.int64), 0, cam.width - 1)
        iu1 = np.clip(np.ceil(umax).astype(np.int64) - 1, 0, cam.width - 1)
        iv0 = np.clip(np.floor(vmin).astype(np.int64), 0, cam.height - 1)
        iv1 = np.clip(np.ceil(vmax).astype(np.int64) - 1, 0, cam.height - 1)
        off_image = (umax <= 0) | (umin >= cam.width) | (vmax <= 0) | (vmin >= cam.height)

        # summed-area table answers "any flame pixel in rectangle" in O(1)
        sat = np.zeros((cam.height + 1, cam.width + 1), dtype=np.int64)
        sat[1:, 1:] = np.cumsum(np.cumsum(mask, axis=0), axis=1)
        hit = (
            sat[iv1 + 1, iu1 + 1] - sat[iv0, iu1 + 1] - sat[iv1 + 1, iu0] + sat[iv0, iu0]
        ) > 0
        hit &= vox_ok & ~off_image
        tags[hit] |= np.uint32(1 << i)

    return HullTags(tags, len(cameras))


def hull_contains(tags: HullTags, voxel_index) -> bool:
    """True iff all views tagged the voxel (low n_views bits all set)."""
    ix, iy, iz = voxel_index
    return int(tags.tags[ix, iy, iz]) == tags.full_mask


# --- volume file I/O (FVR1) -------------------------------------------------
#
# Binary, little-endian: magic "FVR1"; u32 version=1; u32 channel count C;
# u32 nx, ny, nz; f64 origin x, y, z (m); f64 edge (m); then C planes of f32
# key-point values, each (nx+1)(ny+1)(nz+1) long, x-fastest.

_VOL_HEADER = struct.Struct("<4sIIIII3dd")


def save_volume(path, grids: list[VoxelGrid]) -> None:
    if not grids:
        raise ValueError("no grids to save")
    g0 = grids[0]
    for g in grids[1:]:
        if not g0.same_geometry(g):
            raise ValueError("all channels must share geometry")
    with open(path, "wb") as f:
        f.write(
            _VOL_HEADER.pack(
                MAGIC_VOLUME,
                1,
                len(grids),
                g0.nx,
                g0.ny,
                g0.nz,
                g0.origin[0],
                g0.origin[1],
                g0.origin[2],
                g0.edge,
            )
        )
        for g in grids:
            f.write(np.ascontiguousarray(g.values.ravel(order="F"), dtype="<f4").tobytes())


def load_volume(path, tags: tuple[str, ...] | None = None) -> list[VoxelGrid]:
    with open(path, "rb") as f:
        head = f.read(_VOL_HEADER.size)
        if len(head) < _VOL_HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, nch, nx, ny, nz, ox, oy, oz, edge = _VOL_HEADER.unpack(head)
        if magic != MAGIC_VOLUME:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != 1:
            raise FormatError(f"{path}: unsupported version {version}")
        if tags is None:
            tags = ("red", "green", "blue") if nch == 3 else ("temperature",) * nch
        if len(tags) != nch:
            raise FormatError(f"{path}: {nch} channels but {len(tags)} tags given")
        n_vals = (nx + 1) * (ny + 1) * (nz + 1)
        grids = []
        for c in range(nch):
            buf = f.read(4 * n_vals)
            if len(buf) < 4 * n_vals:
                raise FormatError(f"{path}: truncated channel {c}")
            vals = np.frombuffer(buf, dtype="<f4").reshape(
                (nx + 1, ny + 1, nz + 1), order="F"
            )
            grids.append(
                VoxelGrid(nx, ny, nz, np.array([ox, oy, oz]), edge, tags[c], vals)
            )
    return grids


_HULL_HEADER = struct.Struct("<4sIIIII3dd")


def save_hull(path, hull: HullTags, grid_geom: VoxelGrid) -> None:
    with open(path, "wb") as f:
        f.write(
            _HULL_HEADER.pack(
                MAGIC_HULL,
                1,
                hull.n_views,
                grid_geom.nx,
                grid_geom.ny,
                grid_geom.nz,
                grid_geom.origin[0],
                grid_geom.origin[1],
                grid_geom.origin[2],
                grid_geom.edge,
            )
        )
        f.write(np.ascontiguousarray(hull.tags.ravel(order="F"), dtype="<u4").tobytes())


def load_hull(path) -> tuple[HullTags, VoxelGrid]:
    """Returns the tags plus an empty grid carrying the hull's geometry."""
    with open(path, "rb") as f:
        head = f.read(_HULL_HEADER.size)
        if len(head) < _HULL_HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, n_views, nx, ny, nz, ox, oy, oz, edge = _HULL_HEADER.unpack(head)
        if magic != MAGIC_HULL:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != 1:
            raise FormatError(f"{path}: unsupported version {version}")
        n_vox = nx * ny * nz
        buf = f.read(4 * n_vox)
        if len(buf) < 4 * n_vox:
            raise FormatError(f"{path}: truncated tag data")
        tags = np.frombuffer(buf, dtype="<u4").reshape((nx, ny, nz), order="F")
    geom = VoxelGrid(nx, ny, nz, np.array([ox, oy, oz]), edge)
    return HullTags(tags.copy(), n_views), geom
