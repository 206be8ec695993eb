"""Pinhole camera model: ray generation, projection, camera file I/O.

Conventions used throughout the package:

* World units are meters.
* ``rotation`` maps world coordinates into the camera frame,
  ``x_cam = R @ x_world + t``; the camera looks along +z of its own frame,
  u grows to the right and v grows downward.
* Integer pixel indices address pixel centers: ``pixel_ray(cam, 10, 20)``
  casts through (10.5, 20.5). Fractional coordinates are taken literally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, GeometryError

_ORTHO_TOL = 1e-6


@dataclass(frozen=True)
class Camera:
    """Calibrated pinhole camera (no distortion model)."""

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray
    translation: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        R.setflags(write=False)
        t.setflags(write=False)
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        err = np.abs(R.T @ R - np.eye(3)).max()
        if err > _ORTHO_TOL:
            raise ValueError(f"rotation is not orthonormal (|R^T R - I| = {err:.3e})")
        if np.linalg.det(R) < 0:
            raise ValueError("rotation has negative determinant (reflection)")

    @property
    def center(self) -> np.ndarray:
        """Optical center in world coordinates."""
        return -self.rotation.T @ self.translation

    def to_camera(self, point) -> np.ndarray:
        return self.rotation @ np.asarray(point, dtype=np.float64) + self.translation


@dataclass(frozen=True)
class Ray:
    """World-space ray with unit direction."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64).reshape(3)
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"ray direction must be unit length, got |d| = {n!r}")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)
        o.setflags(write=False)
        d.setflags(write=False)

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


def pixel_ray(camera: Camera, u, v) -> Ray:
    """Ray from the optical center through image location (u, v).

    Integer indices are shifted to the pixel center (u + 0.5, v + 0.5);
    floats are used as given.
    """
    if not (0 <= u < camera.width and 0 <= v < camera.height):
        raise ValueError(f"pixel ({u}, {v}) outside {camera.width}x{camera.height} image")
    uu = u + 0.5 if isinstance(u, (int, np.integer)) else float(u)
    vv = v + 0.5 if isinstance(v, (int, np.integer)) else float(v)
    d_cam = np.array(
        [(uu - camera.cx) / camera.fx, (vv - camera.cy) / camera.fy, 1.0], dtype=np.float64
    )
    d_world = camera.rotation.T @ d_cam
    d_world /= np.linalg.norm(d_world)
    return Ray(camera.center, d_world)


def project(camera: Camera, point) -> tuple[float, float, float]:
    """Perspective projection of a world point: (u, v, camera-frame depth)."""
    p = camera.to_camera(point)
    if p[2] <= 0:
        raise GeometryError(f"point {np.asarray(point)} has non-positive depth {p[2]:.6g}")
    u = camera.fx * p[0] / p[2] + camera.cx
    v = camera.fy * p[1] / p[2] + camera.cy
    return float(u), float(v), float(p[2])


def project_points(camera: Camera, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection of an (N, 3) array; raises if any point is behind."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cam = pts @ camera.rotation.T + camera.translation
    z = cam[:, 2]
    if np.any(z <= 0):
        raise GeometryError("point(s) behind the camera")
    u = camera.fx * cam[:, 0] / z + camera.cx
    v = camera.fy * cam[:, 1] / z + camera.cy
    return u, v, z


def pixel_rays(camera: Camera, us: np.ndarray, vs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized pixel-center rays; returns (origin (3,), directions (N, 3)).

    ``us``/``vs`` are fractional image coordinates (no center shift applied).
    """
    us = np.asarray(us, dtype=np.float64).ravel()
    vs = np.asarray(vs, dtype=np.float64).ravel()
    d = np.stack(
        [(us - camera.cx) / camera.fx, (vs - camera.cy) / camera.fy, np.ones_like(us)], axis=1
    )
    d = d @ camera.rotation  # rows of R^T applied to each direction
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return camera.center, d


def look_at(position, target, up=(0.0, 0.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera rotation and translation for a camera at ``position``
    aimed at ``target``, with image v pointing away from ``up``."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    nr = np.linalg.norm(right)
    if nr < 1e-12:
        raise GeometryError("view direction is parallel to the up vector")
    right /= nr
    down = np.cross(forward, right)
    R = np.stack([right, down, forward], axis=0)
    t = -R @ position
    return R, t


# --- camera file I/O -------------------------------------------------------
#
# UTF-8 text, "key = value" lines, '#' comments. Each record starts with a
# "camera = <index>" line followed by width, height, fx, fy, cx, cy,
# rotation (nine row-major floats) and translation (three floats).
# Lengths are meters. Floats are written with repr so a save/load round
# trip is bit-exact.

_CAMERA_KEYS = ("width", "height", "fx", "fy", "cx", "cy", "rotation", "translation")


def save_cameras(path, cameras: list[Camera]) -> None:
    lines = ["# fvr cameras v1"]
    for i, cam in enumerate(cameras):
        lines.append(f"camera = {i}")
        lines.append(f"width = {cam.width}")
        lines.append(f"height = {cam.height}")
        for k in ("fx", "fy", "cx", "cy"):
            lines.append(f"{k} = {float(getattr(cam, k))!r}")
        lines.append("rotation = " + " ".join(repr(float(x)) for x in cam.rotation.ravel()))
        lines.append("translation = " + " ".join(repr(float(x)) for x in cam.translation))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_cameras(path) -> list[Camera]:
    """Parse a camera-parameter file; every camera is validated on load."""
    records: list[dict] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key == "camera":
                records.append({})
                continue
            if not records:
                raise FormatError(f"{path}:{lineno}: '{key}' before any 'camera =' record")
            if key not in _CAMERA_KEYS:
                raise FormatError(f"{path}:{lineno}: unknown key '{key}'")
            records[-1][key] = val

    cameras = []
    for idx, rec in enumerate(records):
        missing = [k for k in _CAMERA_KEYS if k not in rec]
        if missing:
            raise FormatError(f"camera {idx}: missing keys {missing}")
        try:
            cam = Camera(
                fx=float(rec["fx"]),
                fy=float(rec["fy"]),
                cx=float(rec["cx"]),
                cy=float(rec["cy"]),
                rotation=np.array([float(x) for x in rec["rotation"].split()]).reshape(3, 3),
                translation=np.array([float(x) for x in rec["translation"].split()]),
                width=int(rec["width"]),
                height=int(rec["height"]),
            )
        except (ValueError, TypeError) as e:
            raise FormatError(f"camera {idx}: {e}") from e
        cameras.append(cam)
    return cameras
