import numpy as np
import pytest

from fvr.geometry import project
from fvr.radiometry import build_color_temp_map
from fvr.synth import synth_cameras, synth_volume
from fvr.volume import Aabb


@pytest.fixture(scope="module")
def cmap():
    return build_color_temp_map()


def test_slab_is_constant():
    vols = synth_volume((8, 8, 8), seed=0, kind="slab", slab_value=100.0)
    for tag in ("red", "green", "blue"):
        assert np.all(vols[tag].values == 100.0)


def test_same_seed_identical():
    a = synth_volume((12, 12, 12), seed=9, kind="flame")
    b = synth_volume((12, 12, 12), seed=9, kind="flame")
    for tag in a:
        assert np.array_equal(a[tag].values, b[tag].values)
    c = synth_volume((12, 12, 12), seed=10, kind="flame")
    assert not np.array_equal(a["red"].values, c["red"].values)


def test_flame_green_within_map_range(cmap):
    vols = synth_volume((16, 16, 16), seed=2, kind="flame", cmap=cmap)
    green = vols["green"].values
    lit = green[green > 0]
    assert lit.size > 0
    assert lit.min() >= cmap.green[0] - 1e-6
    assert lit.max() <= cmap.green[-1] + 1e-3


def test_flame_temperature_within_map_range(cmap):
    vols = synth_volume((16, 16, 16), seed=2, kind="flame", cmap=cmap)
    temps = vols["temperature"].values
    assert temps.min() >= cmap.t_min
    assert temps.max() <= cmap.t_max + 1e-3


def test_smoke_is_gray():
    vols = synth_volume((12, 12, 12), seed=4, kind="smoke")
    assert np.array_equal(vols["red"].values, vols["green"].values)
    assert np.array_equal(vols["red"].values, vols["blue"].values)
    assert "temperature" not in vols


def test_dims_validation():
    with pytest.raises(ValueError):
        synth_volume((4, 16, 16), seed=0)
    with pytest.raises(ValueError):
        synth_volume((16, 16, 16), seed=0, kind="plasma")


def test_default_geometry_is_centered_cube():
    vols = synth_volume((16, 16, 16), seed=0, kind="slab")
    g = vols["red"]
    assert np.allclose(g.box.size, 0.2)
    assert np.allclose(g.box.origin, -0.1)


def test_cameras_azimuth_spacing():
    cams = synth_cameras(10, elevation_jitter_deg=0.0)
    # optical axes of neighbors are 36 degrees apart
    for a, b in zip(cams, cams[1:]):
        axis_a = a.rotation[2]
        axis_b = b.rotation[2]
        angle = np.degrees(np.arccos(np.clip(np.dot(axis_a, axis_b), -1, 1)))
        assert angle == pytest.approx(36.0, abs=1e-9)


def test_cameras_zero_jitter_coplanar():
    cams = synth_cameras(8, elevation_jitter_deg=0.0)
    for cam in cams:
        assert abs(cam.rotation[2][2]) < 1e-12  # optical axis stays in the plane
        assert abs(cam.center[2]) < 1e-12


def test_cameras_jitter_bounded_and_seeded():
    cams1 = synth_cameras(6, elevation_jitter_deg=5.0, seed=3)
    cams2 = synth_cameras(6, elevation_jitter_deg=5.0, seed=3)
    for a, b in zip(cams1, cams2):
        assert np.array_equal(a.rotation, b.rotation)
    for cam in cams1:
        elev = np.degrees(np.arcsin(cam.center[2] / np.linalg.norm(cam.center)))
        assert abs(elev) <= 5.0 + 1e-9


def test_cameras_see_all_box_corners():
    cams = synth_cameras(10, elevation_jitter_deg=5.0, width=320, height=240, seed=7)
    box = Aabb.cube((0.0, 0.0, 0.0), 0.2)
    for cam in cams:
        for corner in box.corners():
            u, v, z = project(cam, corner)
            assert z > 0
            assert 0 <= u < cam.width
            assert 0 <= v < cam.height


def test_cameras_validation():
    with pytest.raises(ValueError):
        synth_cameras(0)
    with pytest.raises(ValueError):
        synth_cameras(4, fov=0.0)
