"""Input-frame preparation: flame thresholding, bounding box, stylization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoFlameError
from .imgio import Image

FLAME_THRESHOLD = 30.0
BBOX_DILATE_PX = 4


@dataclass(frozen=True)
class Rect:
    """Inclusive pixel rectangle."""

    u0: int
    v0: int
    u1: int
    v1: int

    def __post_init__(self):
        if self.u1 < self.u0 or self.v1 < self.v0:
            raise ValueError(f"degenerate rect {self}")

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.v0, self.v1 + 1), slice(self.u0, self.u1 + 1)

    @property
    def area(self) -> int:
        return (self.u1 - self.u0 + 1) * (self.v1 - self.v0 + 1)

    def contains(self, u: int, v: int) -> bool:
        return self.u0 <= u <= self.u1 and self.v0 <= v <= self.v1


@dataclass
class FlameMask:
    """Per-pixel flame flags for one view."""

    width: int
    height: int
    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.ascontiguousarray(self.bits, dtype=bool).reshape(
            self.height, self.width
        )

    @property
    def count(self) -> int:
        return int(self.bits.sum())


def threshold_mask(img: Image, threshold: float = FLAME_THRESHOLD) -> tuple[FlameMask, Image]:
    """Flame pixels are those whose maximum channel intensity exceeds the
    threshold (strictly); all other pixels are blanked to black."""
    if img.channels != 3:
        raise ValueError("threshold_mask expects a 3-channel image")
    bits = img.data.max(axis=2) > threshold
    blanked = np.where(bits[:, :, None], img.data, np.float32(0.0))
    return FlameMask(img.width, img.height, bits), Image(img.width, img.height, 3, blanked)


def bounding_box(masks: list[FlameMask], dilate: int = BBOX_DILATE_PX) -> Rect:
    """Tight union box over the set pixels of all masks, dilated and clipped."""
    if not masks:
        raise ValueError("at least one mask required")
    w, h = masks[0].width, masks[0].height
    for m in masks[1:]:
        if (m.width, m.height) != (w, h):
            raise ValueError("masks must share a resolution")
    u0, v0, u1, v1 = w, h, -1, -1
    for m in masks:
        vs, us = np.nonzero(m.bits)
        if us.size == 0:
            continue
        u0 = min(u0, int(us.min()))
        u1 = max(u1, int(us.max()))
        v0 = min(v0, int(vs.min()))
        v1 = max(v1, int(vs.max()))
    if u1 < 0:
        raise NoFlameError("all masks are empty")
    return Rect(
        max(0, u0 - dilate),
        max(0, v0 - dilate),
        min(w - 1, u1 + dilate),
        min(h - 1, v1 + dilate),
    )


def stylize_input(object_img: Image, flame_img: Image) -> Image:
    """Merge a grayscale object into a flame frame through the green channel.

    Output green is the per-pixel max of the object gray and the flame
    green; red and blue are copied from the flame frame.
    """
    if object_img.channels != 1:
        raise ValueError("object image must be grayscale (1 channel)")
    if flame_img.channels != 3:
        raise ValueError("flame image must have 3 channels")
    if (object_img.width, object_img.height) != (flame_img.width, flame_img.height):
        raise ValueError("image sizes must match")
    out = flame_img.data.copy()
    out[:, :, 1] = np.maximum(out[:, :, 1], object_img.data[:, :, 0])
    return Image(flame_img.width, flame_img.height, 3, out)
