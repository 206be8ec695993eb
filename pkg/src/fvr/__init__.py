"""Sparse-view reconstruction of emissive semitransparent volumes.

Multi-view images of a flame or smoke plume are inverted into a voxel
lattice by iteratively rendering with a radiative-transport model and
back-projecting pixel residuals, restricted to the visual hull. Black-body
radiometry maps the green channel to temperature; a CCD smear simulator
covers the multi-camera shutter-timing side of the capture protocol.
"""

from .errors import EmptyHullError, FormatError, FvrError, GeometryError, NoFlameError
from .geometry import Camera, Ray, load_cameras, pixel_ray, project, save_cameras
from .imgio import Image, load_image, read_fim, read_ppm, write_fim, write_pbm, write_ppm
from .preprocess import FlameMask, Rect, bounding_box, stylize_input, threshold_mask
from .radiometry import (
    ColorTempMap,
    PhaseConfig,
    PhysicalConstants,
    build_color_temp_map,
    phase_hg,
    planck_radiance,
    temp_from_green,
)
from .reconstruct import (
    ColorResult,
    IterationTrace,
    ReconstructionConfig,
    TemperatureResult,
    adjust_pass,
    adjustment_value,
    reconstruct_channel,
    reconstruct_color,
    reconstruct_temperature,
    residual_image,
    rmse_pixels,
    rmse_volume,
)
from .render import RenderConfig, in_scatter, integrate_ray, march, render_view, sample_transparency
from .syncsim import (
    CcdTimingModel,
    SmearPattern,
    StrobeConfig,
    estimate_offsets,
    estimate_t_per_row,
    simulate_smear,
    suggest_shutter_resets,
)
from .synth import synth_cameras, synth_volume
from .volume import (
    Aabb,
    HullTags,
    SamplePoint,
    VoxelGrid,
    compute_visual_hull,
    determine_dimensions,
    hull_contains,
    load_volume,
    sample_trilinear,
    save_volume,
)

__version__ = "0.1.0"
