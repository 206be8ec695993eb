"""Numba kernels for ray marching, rendering, and volume adjustment.

Determinism contract: rendering parallelizes over rays and every ray's
arithmetic is an independent sequential loop, so results are bit-identical
for any thread count. The adjustment kernel accumulates into per-chunk
partial buffers with a chunk split that is fixed (independent of the thread
count); the host merges chunks in fixed order, so adjusted volumes are also
bit-identical for any thread count.

fastmath stays off everywhere; IEEE semantics are part of the contract.
"""

import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")
_cpus = os.cpu_count() or 1
os.environ.setdefault("NUMBA_NUM_THREADS", str(max(_cpus, 8)))

import numba
import numpy as np
from numba import njit, prange

numba.set_num_threads(_cpus)

MARCH_COUNT_EPS = 1e-9  # guards floor(span/edge) against one-ulp shortfalls


def set_threads(n: int) -> None:
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def get_threads() -> int:
    return numba.get_num_threads()


@njit(cache=True, inline="always")
def _box_span(ox, oy, oz, dx, dy, dz, lox, loy, loz, hix, hiy, hiz):
    """Slab intersection; returns (hit, t_entry, t_exit) with t_entry >= 0."""
    tmin = -1.0e300
    tmax = 1.0e300
    for axis in range(3):
        if axis == 0:
            o, d, lo, hi = ox, dx, lox, hix
        elif axis == 1:
            o, d, lo, hi = oy, dy, loy, hiy
        else:
            o, d, lo, hi = oz, dz, loz, hiz
        if d == 0.0:
            if o < lo or o > hi:
                return False, 0.0, 0.0
        else:
            t0 = (lo - o) / d
            t1 = (hi - o) / d
            if t0 > t1:
                t0, t1 = t1, t0
            if t0 > tmin:
                tmin = t0
            if t1 < tmax:
                tmax = t1
    t_entry = tmin if tmin > 0.0 else 0.0
    if tmax <= t_entry:
        return False, 0.0, 0.0
    return True, t_entry, tmax


@njit(cache=True, inline="always")
def _tri_clamped(vals, qx, qy, qz, nx, ny, nz):
    """Trilinear read in lattice units; negative corners clamp to zero."""
    ix = int(np.floor(qx))
    iy = int(np.floor(qy))
    iz = int(np.floor(qz))
    if ix < 0:
        ix = 0
    elif ix > nx - 1:
        ix = nx - 1
    if iy < 0:
        iy = 0
    elif iy > ny - 1:
        iy = ny - 1
    if iz < 0:
        iz = 0
    elif iz > nz - 1:
        iz = nz - 1
    fx = qx - ix
    fy = qy - iy
    fz = qz - iz
    acc = 0.0
    for dz in range(2):
        wz = fz if dz == 1 else 1.0 - fz
        for dy in range(2):
            wy = fy if dy == 1 else 1.0 - fy
            for dx in range(2):
                wx = fx if dx == 1 else 1.0 - fx
                v = vals[ix + dx, iy + dy, iz + dz]
                if v < 0.0:
                    v = 0.0
                acc += wx * wy * wz * v
    return acc


@njit(cache=True, parallel=True)
def render_rays(
    origin,
    dirs,
    values,
    grid_origin,
    edge,
    tau,
    sigma_a,
    background,
    scattering,
    sigma_s,
    scat_dirs,
    phase_g,
    gather_dist,
    out,
):
    """Front-to-back under blending of per-sample radiance along each ray.

    ``values`` is (C, nx+1, ny+1, nz+1) float32; ``out`` is (N, C) float64.
    """
    nch = values.shape[0]
    nx = values.shape[1] - 1
    ny = values.shape[2] - 1
    nz = values.shape[3] - 1
    lox, loy, loz = grid_origin[0], grid_origin[1], grid_origin[2]
    hix = lox + nx * edge
    hiy = loy + ny * edge
    hiz = loz + nz * edge
    n_scat = scat_dirs.shape[0]

    for r in prange(dirs.shape[0]):
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        hit, t_entry, t_exit = _box_span(
            origin[0], origin[1], origin[2], dx, dy, dz, lox, loy, loz, hix, hiy, hiz
        )
        t_dst = 1.0
        l_dst = np.zeros(nch)
        if hit:
            n_samples = int(np.floor((t_exit - t_entry) / edge + MARCH_COUNT_EPS))
            for k in range(1, n_samples + 1):
                t = t_entry + (k - 0.5) * edge
                px = origin[0] + t * dx
                py = origin[1] + t * dy
                pz = origin[2] + t * dz
                qx = (px - lox) / edge
                qy = (py - loy) / edge
                qz = (pz - loz) / edge
                for c in range(nch):
                    l_src = sigma_a * _tri_clamped(values[c], qx, qy, qz, nx, ny, nz)
                    if scattering and sigma_s > 0.0:
                        acc = 0.0
                        for s in range(n_scat):
                            sx = px + 0.5 * gather_dist * scat_dirs[s, 0]
                            sy = py + 0.5 * gather_dist * scat_dirs[s, 1]
                            sz = pz + 0.5 * gather_dist * scat_dirs[s, 2]
                            if (
                                lox <= sx <= hix
                                and loy <= sy <= hiy
                                and loz <= sz <= hiz
                            ):
                                e = _tri_clamped(
                                    values[c],
                                    (sx - lox) / edge,
                                    (sy - loy) / edge,
                                    (sz - loz) / edge,
                                    nx,
                                    ny,
                                    nz,
                                )
                                mu = (
                                    dx * scat_dirs[s, 0]
                                    + dy * scat_dirs[s, 1]
                                    + dz * scat_dirs[s, 2]
                                )
                                ph = (1.0 - phase_g * phase_g) / (
                                    4.0
                                    * np.pi
                                    * (1.0 + phase_g * phase_g + 2.0 * phase_g * mu) ** 1.5
                                )
                                acc += e * ph
                        l_src += sigma_s * acc * 4.0 * np.pi / n_scat
                    l_dst[c] += t_dst * (tau * l_src)
                t_dst *= 1.0 - tau
        for c in range(nch):
            out[r, c] = l_dst[c] + t_dst * background[c]


@njit(cache=True, parallel=True)
def count_hull_samples(origin, dirs, inside_vox, grid_origin, edge, counts):
    """Per ray, how many samples land in an inside-hull voxel."""
    nx, ny, nz = inside_vox.shape
    lox, loy, loz = grid_origin[0], grid_origin[1], grid_origin[2]
    hix = lox + nx * edge
    hiy = loy + ny * edge
    hiz = loz + nz * edge
    for r in prange(dirs.shape[0]):
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        hit, t_entry, t_exit = _box_span(
            origin[0], origin[1], origin[2], dx, dy, dz, lox, loy, loz, hix, hiy, hiz
        )
        n_in = 0
        if hit:
            n_samples = int(np.floor((t_exit - t_entry) / edge + MARCH_COUNT_EPS))
            for k in range(1, n_samples + 1):
                t = t_entry + (k - 0.5) * edge
                ix = int(np.floor((origin[0] + t * dx - lox) / edge))
                iy = int(np.floor((origin[1] + t * dy - loy) / edge))
                iz = int(np.floor((origin[2] + t * dz - loz) / edge))
                if ix < 0:
                    ix = 0
                elif ix > nx - 1:
                    ix = nx - 1
                if iy < 0:
                    iy = 0
                elif iy > ny - 1:
                    iy = ny - 1
                if iz < 0:
                    iz = 0
                elif iz > nz - 1:
                    iz = nz - 1
                if inside_vox[ix, iy, iz]:
                    n_in += 1
        counts[r] = n_in


@njit(cache=True, parallel=True)
def adjust_rays_chunked(
    origin,
    dirs,
    residuals,
    g_values,
    g_offsets,
    use_g,
    inside_vox,
    grid_origin,
    edge,
    tau,
    alpha_l,
    alpha_d,
    partials,
):
    """Back-project per-ray residuals onto the 8 key points of every in-hull
    sample, weighted by blend transparency and key-sample distance.

    Rays are split into ``partials.shape[0]`` contiguous chunks processed in
    parallel; each chunk owns one float64 partial lattice. The chunk split
    depends only on the ray count, never on the thread count.
    """
    n_rays = dirs.shape[0]
    n_chunks = partials.shape[0]
    nx, ny, nz = inside_vox.shape
    lox, loy, loz = grid_origin[0], grid_origin[1], grid_origin[2]
    hix = lox + nx * edge
    hiy = loy + ny * edge
    hiz = loz + nz * edge
    for chunk in prange(n_chunks):
        r0 = chunk * n_rays // n_chunks
        r1 = (chunk + 1) * n_rays // n_chunks
        for r in range(r0, r1):
            dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
            hit, t_entry, t_exit = _box_span(
                origin[0], origin[1], origin[2], dx, dy, dz, lox, loy, loz, hix, hiy, hiz
            )
            if not hit:
                continue
            n_samples = int(np.floor((t_exit - t_entry) / edge + MARCH_COUNT_EPS))
            trans = 1.0  # (1 - tau)^(k-1)
            gi = g_offsets[r]
            for k in range(1, n_samples + 1):
                t = t_entry + (k - 0.5) * edge
                px = origin[0] + t * dx
                py = origin[1] + t * dy
                pz = origin[2] + t * dz
                ix = int(np.floor((px - lox) / edge))
                iy = int(np.floor((py - loy) / edge))
                iz = int(np.floor((pz - loz) / edge))
                if ix < 0:
                    ix = 0
                elif ix > nx - 1:
                    ix = nx - 1
                if iy < 0:
                    iy = 0
                elif iy > ny - 1:
                    iy = ny - 1
                if iz < 0:
                    iz = 0
                elif iz > nz - 1:
                    iz = nz - 1
                if inside_vox[ix, iy, iz]:
                    g = g_values[gi] if use_g else 1.0
                    gi += 1
                    base = alpha_l * residuals[r] * trans * g
                    for cz in range(2):
                        wz = loz + (iz + cz) * edge
                        for cy in range(2):
                            wy = loy + (iy + cy) * edge
                            for cx in range(2):
                                wx = lox + (ix + cx) * edge
                                dist = np.sqrt(
                                    (px - wx) ** 2 + (py - wy) ** 2 + (pz - wz) ** 2
                                )
                                partials[chunk, ix + cx, iy + cy, iz + cz] += base * np.exp(
                                    -alpha_d * dist
                                )
                trans *= 1.0 - tau
