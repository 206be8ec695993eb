import os

# allow determinism tests to swing the worker count before numba initializes
os.environ.setdefault("NUMBA_NUM_THREADS", "8")

import numpy as np
import pytest

from fvr.geometry import Camera, look_at


@pytest.fixture
def simple_camera() -> Camera:
    """Identity-pose 640x480 camera, fx = fy = 500."""
    return Camera(
        fx=500.0, fy=500.0, cx=320.0, cy=240.0,
        rotation=np.eye(3), translation=np.zeros(3),
        width=640, height=480,
    )


def make_ring_camera(azimuth_deg: float, radius: float = 0.3, width: int = 80,
                     height: int = 60, fov_deg: float = 60.0) -> Camera:
    a = np.radians(azimuth_deg)
    pos = radius * np.array([np.cos(a), np.sin(a), 0.0])
    R, t = look_at(pos, (0.0, 0.0, 0.0))
    fy = (height / 2.0) / np.tan(np.radians(fov_deg) / 2.0)
    return Camera(fx=fy, fy=fy, cx=width / 2.0, cy=height / 2.0,
                  rotation=R, translation=t, width=width, height=height)
